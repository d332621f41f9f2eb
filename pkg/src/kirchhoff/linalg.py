"""Finite-difference operators, conjugate gradients and the smallest eigenvalue."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from . import kernels
from .errors import ConvergenceError, OperatorError, SolverError
from .mesh import Field

__all__ = [
    "SparseOperator",
    "CGResult",
    "assemble_laplacian",
    "assemble_schrodinger",
    "cg_solve",
    "smallest_eigenvalue",
]

CG_TOL = 1e-10


class SparseOperator:
    """Immutable symmetric CSR matrix (int32 indices, sorted columns)."""

    def __init__(self, matrix):
        m = sp.csr_matrix(matrix, dtype=float)
        m.sum_duplicates()
        m.sort_indices()
        self.matrix = m
        self.indptr = np.ascontiguousarray(m.indptr, dtype=np.intc)
        self.indices = np.ascontiguousarray(m.indices, dtype=np.intc)
        self.data = np.ascontiguousarray(m.data, dtype=float)
        for a in (self.indptr, self.indices, self.data):
            a.flags.writeable = False

    @property
    def n(self):
        return self.matrix.shape[0]

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, x):
        return self.matrix @ np.asarray(x, dtype=float)

    def diagonal(self):
        return self.matrix.diagonal()

    def quadratic_form(self, u):
        u = np.asarray(u, dtype=float)
        return float(u @ (self.matrix @ u))

    def gershgorin_lower(self):
        """min_i (a_ii - sum_{j != i} |a_ij|), a lower bound on the spectrum."""
        d = self.diagonal()
        off = np.asarray(abs(self.matrix).sum(axis=1)).ravel() - np.abs(d)
        return float(np.min(d - off))

    def shifted(self, c):
        """A - c I."""
        return SparseOperator(self.matrix - c * sp.identity(self.n, format="csr"))

    def minus_diagonal(self, alpha):
        """A - diag(alpha)."""
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (self.n,))
        return SparseOperator(self.matrix - sp.diags(alpha, format="csr"))

    def is_symmetric(self, tol=0.0):
        diff = self.matrix - self.matrix.T
        return diff.nnz == 0 or float(abs(diff).max()) <= tol

    def toarray(self):
        return self.matrix.toarray()

    def __repr__(self):
        return f"SparseOperator(n={self.n}, nnz={self.matrix.nnz})"


def _second_difference(n, h):
    main = np.full(n, 2.0 / (h * h))
    off = np.full(n - 1, -1.0 / (h * h))
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


def assemble_laplacian(mesh):
    """3-point (1D) or 5-point (2D) Dirichlet Laplacian on interior nodes, scaled by 1/h^2."""
    if mesh.dim == 1:
        return SparseOperator(_second_difference(mesh.shape[0], mesh.h[0]))
    nx, ny = mesh.shape
    hx, hy = mesh.h
    # x varies fastest in storage order
    a = sp.kron(sp.identity(ny), _second_difference(nx, hx)) + sp.kron(_second_difference(ny, hy), sp.identity(nx))
    return SparseOperator(a)


def assemble_schrodinger(mesh, alpha, laplacian=None):
    """-Delta - alpha(x): the Laplacian minus the diagonal of nodal alpha values."""
    values = alpha.values if isinstance(alpha, Field) else alpha
    values = np.broadcast_to(np.asarray(values, dtype=float), (mesh.size,))
    if not np.all(np.isfinite(values)):
        raise ValueError("alpha must be finite on every node (decide infinite limits before assembly)")
    lap = laplacian if laplacian is not None else assemble_laplacian(mesh)
    return lap.minus_diagonal(values)


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float


def cg_solve(A, b, tol=CG_TOL, maxit=None, x0=None, callback=None, backend=None):
    """Solve A x = b for SPD ``A`` until ||A x - b|| <= tol ||b||.

    ``callback(k, x_k)`` is called after every iteration.  Raises
    :class:`ConvergenceError` when ``maxit`` (default max(100, 10 n)) is exhausted
    and :class:`OperatorError` on non-positive curvature.
    """
    b = np.ascontiguousarray(b, dtype=float)
    if b.shape != (A.n,):
        raise ValueError(f"right-hand side has shape {b.shape}, operator has n={A.n}")
    if not np.all(np.isfinite(b)):
        raise ValueError("non-finite right-hand side")
    maxit = max(100, 10 * A.n) if maxit is None else int(maxit)
    k = kernels.get(backend)
    x, it, rel, status = k.cg(A.indptr, A.indices, A.data, b, x0, float(tol), maxit, callback)
    if status == 4:
        raise OperatorError(f"non-positive curvature after {it} CG iterations: operator is not SPD")
    if status:
        raise ConvergenceError(f"CG did not reach {tol:g} in {it} iterations (residual {rel:.3e})", rel, it)
    return CGResult(np.asarray(x), int(it), float(rel))


def smallest_eigenvalue(A, tol=1e-12, maxit=500, inner_tol=CG_TOL, backend=None):
    """(lambda_1, v) by shifted inverse iteration.

    With sigma = (Gershgorin lower bound) - 1 the matrix B = A - sigma I is SPD;
    iterate x <- B^{-1} x / ||.|| from the normalized all-ones vector with CG
    inner solves until the Rayleigh quotient changes by at most tol max(1, |lambda|).
    The returned unit eigenvector has a nonnegative sum.
    """
    sigma = A.gershgorin_lower() - 1.0
    B = A.shifted(sigma)
    x = np.full(A.n, 1.0 / math.sqrt(A.n))
    prev = math.inf
    hist = []
    for _ in range(maxit):
        y = cg_solve(B, x, tol=inner_tol, backend=backend).x
        x = y / math.sqrt(float(y @ y))
        rho = B.quadratic_form(x)
        lam = rho + sigma
        hist.append(lam)
        if abs(lam - prev) <= tol * max(1.0, abs(lam)):
            if x.sum() < 0:
                x = -x
            return lam, x
        prev = lam
    raise SolverError(
        f"inverse iteration stagnated without converging after {maxit} steps "
        f"(last Rayleigh quotients {hist[-2]!r}, {hist[-1]!r})"
    )
