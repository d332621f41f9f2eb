"""Uniform interior grids on intervals and rectangles with homogeneous Dirichlet data."""

from __future__ import annotations

import io

import numpy as np

from .errors import KirchhoffError

__all__ = ["Mesh", "Field", "gradient_energy", "l2_norm", "linf_norm", "apply_pointwise"]


class Mesh:
    """Interior nodes of a uniform grid on [a, b] or [a, b] x [c, d].

    ``n`` is the interior node count per axis (an int, or a pair in 2D); the
    spacing on each axis is (b - a)/(n + 1).  Values are stored row-major with
    x varying fastest.
    """

    def __init__(self, dim, bounds=None, n=64):
        if dim not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {dim!r}")
        bounds = tuple(tuple(map(float, b)) for b in (bounds or [(0.0, 1.0)] * dim))
        if len(bounds) != dim:
            raise ValueError(f"expected {dim} bound pair(s), got {len(bounds)}")
        ns = (n,) * dim if np.isscalar(n) else tuple(n)
        if len(ns) != dim or any(int(k) != k or k < 2 for k in ns):
            raise ValueError(f"interior node counts must be integers >= 2, got {n!r}")
        for a, b in bounds:
            if not b > a:
                raise ValueError(f"empty interval [{a}, {b}]")
        self.dim = dim
        self.bounds = bounds
        self.shape = tuple(int(k) for k in ns)
        self.h = tuple((b - a) / (k + 1) for (a, b), k in zip(bounds, self.shape))
        self.axes = tuple(a + h * np.arange(1, k + 1) for (a, _), h, k in zip(bounds, self.h, self.shape))

    @property
    def size(self):
        return int(np.prod(self.shape))

    @property
    def cell_measure(self):
        return float(np.prod(self.h))

    def coords(self):
        """Tuple of flat coordinate arrays (x[, y]) in storage order."""
        if self.dim == 1:
            return (self.axes[0],)
        Y, X = np.meshgrid(self.axes[1], self.axes[0], indexing="ij")
        return X.ravel(), Y.ravel()

    def sample(self, fn):
        """Field from a callable of the coordinate arrays."""
        return Field(self, np.broadcast_to(fn(*self.coords()), (self.size,)))

    def zeros(self):
        return Field(self, np.zeros(self.size))

    def refined(self):
        """Mesh with spacing halved: n -> 2n + 1 keeps the old nodes."""
        return Mesh(self.dim, self.bounds, tuple(2 * k + 1 for k in self.shape))

    def with_n(self, n):
        return Mesh(self.dim, self.bounds, n)

    def __eq__(self, other):
        return isinstance(other, Mesh) and (self.dim, self.bounds, self.shape) == (other.dim, other.bounds, other.shape)

    def __hash__(self):
        return hash((self.dim, self.bounds, self.shape))

    def __repr__(self):
        return f"Mesh(dim={self.dim}, bounds={self.bounds}, n={self.shape if self.dim == 2 else self.shape[0]})"

    def to_dict(self):
        return {"dim": self.dim, "bounds": [list(b) for b in self.bounds], "n": list(self.shape)}


class Field:
    """Nodal values on the interior of a mesh; immutable."""

    __slots__ = ("mesh", "values")

    def __init__(self, mesh, values):
        v = np.array(values, dtype=float).reshape(-1)
        if v.size != mesh.size:
            raise ValueError(f"field has {v.size} values, mesh has {mesh.size} nodes")
        if not np.all(np.isfinite(v)):
            i = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValueError(f"non-finite field value at node {i}")
        v.flags.writeable = False
        self.mesh = mesh
        self.values = v

    def grid(self):
        """Values as an array of shape (ny, nx) in 2D, (n,) in 1D."""
        return self.values.reshape(self.mesh.shape[::-1])

    def __add__(self, other):
        return Field(self.mesh, self.values + _vals(other))

    def __sub__(self, other):
        return Field(self.mesh, self.values - _vals(other))

    def __mul__(self, c):
        return Field(self.mesh, self.values * _vals(c))

    __rmul__ = __mul__

    def __neg__(self):
        return Field(self.mesh, -self.values)

    def __len__(self):
        return self.values.size

    def __repr__(self):
        return f"Field({self.mesh!r}, linf={linf_norm(self)!r})"

    def to_csv(self, file=None, precision=17):
        """Write ``x[,y],value`` rows; returns the text when ``file`` is None."""
        cols = self.mesh.coords() + (self.values,)
        header = "x,value" if self.mesh.dim == 1 else "x,y,value"
        buf = io.StringIO()
        buf.write(header + "\n")
        fmt = f"%.{precision}g"
        np.savetxt(buf, np.column_stack(cols), delimiter=",", fmt=fmt)
        text = buf.getvalue()
        if file is None:
            return text
        with open(file, "w", newline="\n") as fh:
            fh.write(text)
        return None


def _vals(x):
    return x.values if isinstance(x, Field) else x


def _padded(fld):
    g = fld.grid()
    return np.pad(g, 1)


def gradient_energy(fld):
    """Discrete Dirichlet energy sum over edges of (difference/h)^2 times the cell measure.

    Edges to the boundary count with boundary value 0, so this equals
    h^d <A u, u> for the standard Dirichlet Laplacian A.
    """
    mesh = fld.mesh
    p = _padded(fld)
    w = mesh.cell_measure
    if mesh.dim == 1:
        d = np.diff(p) / mesh.h[0]
        return float(w * np.dot(d, d))
    hx, hy = mesh.h
    dx = np.diff(p[1:-1, :], axis=1).ravel() / hx
    dy = np.diff(p[:, 1:-1], axis=0).ravel() / hy
    return float(w * (np.dot(dx, dx) + np.dot(dy, dy)))


def l2_norm(fld):
    """Composite trapezoid L2 norm (boundary values vanish, so all interior weights are h^d)."""
    return float(np.sqrt(fld.mesh.cell_measure * np.dot(fld.values, fld.values)))


def linf_norm(fld):
    return float(np.max(np.abs(fld.values))) if fld.values.size else 0.0


_MAP_ERRORS = (ValueError, ArithmeticError, KirchhoffError)


def apply_pointwise(fld, fn):
    """Field of ``fn`` applied to the nodal values (vectorized callables welcome)."""
    try:
        out = fn(fld.values)
    except _MAP_ERRORS as exc:
        # locate the first failing node for the error message
        for i, v in enumerate(fld.values):
            try:
                fn(np.array([v]))
            except _MAP_ERRORS:
                if exc.args:
                    exc.args = (f"{exc.args[0]} [node {i}, value {v!r}]",) + exc.args[1:]
                break
        raise
    out = np.asarray(out, dtype=float)
    bad = ~np.isfinite(out)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ValueError(f"pointwise map produced a non-finite value at node {i} (input {fld.values[i]!r})")
    return Field(fld.mesh, np.broadcast_to(out, fld.values.shape))
