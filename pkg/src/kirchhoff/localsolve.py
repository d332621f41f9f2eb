"""Solvers for the reduced local problems -Delta v = f(x) and -Delta v = h_r(x, v).

Both semilinear iterations advance by increments, v^{k+1} = v^k + A^{-1}(h(v^k) - h(v^{k-1})),
which is the Picard map up to CG error measured relative to the step itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, OrderingError, PreconditionError, SupersolutionError
from .linalg import CG_TOL, assemble_laplacian, cg_solve, smallest_eigenvalue
from .mesh import Field, gradient_energy, linf_norm

__all__ = [
    "SolveReport",
    "weak_residual",
    "solve_linear",
    "solve_semilinear_contraction",
    "solve_semilinear_picard",
    "solve_semilinear_monotone",
    "RESIDUAL_TOL",
]

RESIDUAL_TOL = 1e-8
NO_NONTRIVIAL = "no nontrivial solution found"


@dataclass
class SolveReport:
    solution: Field
    iterations: int
    residual: float
    regime: str
    factors: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    cg_iterations: int = 0
    flags: list = field(default_factory=list)
    subsolution: Field | None = None
    supersolution: Field | None = None
    iterates: list | None = None
    rate_bound: float | None = None

    def to_dict(self):
        d = {
            "regime": self.regime,
            "iterations": int(self.iterations),
            "cg_iterations": int(self.cg_iterations),
            "residual": float(self.residual),
            "linf": linf_norm(self.solution),
            "flags": list(self.flags),
        }
        if self.factors:
            d["factors"] = [float(f) for f in self.factors]
        if self.gaps:
            d["gaps"] = [float(g) for g in self.gaps]
        if self.rate_bound is not None:
            d["rate_bound"] = float(self.rate_bound)
        return d


def _energy_norm(mesh, w):
    return math.sqrt(gradient_energy(Field(mesh, w)))


def weak_residual(mesh, v, rhs):
    """||A v - b|| / ||b|| with a freshly assembled Laplacian (absolute when b = 0).

    ``rhs`` is an array or a callable of the nodal values of v.
    """
    vals = v.values if isinstance(v, Field) else np.asarray(v, dtype=float)
    b = rhs(vals) if callable(rhs) else np.asarray(rhs, dtype=float)
    r = assemble_laplacian(mesh) @ vals - b
    nb = float(np.linalg.norm(b))
    nr = float(np.linalg.norm(r))
    return nr / nb if nb > 0 else nr


def solve_linear(mesh, f, tol=CG_TOL, A=None, backend=None):
    """v = A^{-1} f for nodal data ``f`` (Field or array)."""
    b = f.values if isinstance(f, Field) else np.asarray(f, dtype=float)
    A = A if A is not None else assemble_laplacian(mesh)
    res = cg_solve(A, b, tol=tol, backend=backend)
    v = Field(mesh, res.x)
    return SolveReport(v, 1, weak_residual(mesh, v, b), "linear", cg_iterations=res.iterations)


def _reduced(hr, mesh):
    coords = mesh.coords()
    return lambda s: np.broadcast_to(hr(coords, s), s.shape).astype(float)


def _picard(mesh, h, v0, tol, maxit, cg_tol, residual_tol, A, backend, regime, rate_bound=None, keep=False):
    v_prev = np.zeros(mesh.size) if v0 is None else np.array(_vals(v0), dtype=float)
    hv = h(v_prev)
    # the first step and any corrective step are full solves; the rest solve for increments
    res = cg_solve(A, hv, tol=cg_tol, backend=backend)
    v, cg_its = res.x, res.iterations
    factors, iterates = [], [v_prev.copy(), v.copy()] if keep else None
    prev_norm = None
    for k in range(1, maxit + 1):
        step = _energy_norm(mesh, v - v_prev)
        if not math.isfinite(step):
            raise ConvergenceError(f"{regime} iteration diverged at step {k}", math.inf, k)
        if prev_norm is not None and prev_norm > 0:
            factors.append(step / prev_norm)
        prev_norm = step
        h_new = h(v)
        full = False
        if step <= tol * max(1.0, _energy_norm(mesh, v)):
            sol = Field(mesh, v)
            r = weak_residual(mesh, sol, h_new)
            if r <= residual_tol:
                return SolveReport(sol, k, r, regime, factors, cg_iterations=cg_its, iterates=iterates,
                                   rate_bound=rate_bound)
            full = True
        if full:
            res = cg_solve(A, h_new, tol=cg_tol, x0=v, backend=backend)
            nxt = res.x
        else:
            res = cg_solve(A, h_new - hv, tol=cg_tol, backend=backend)
            nxt = v + res.x
        cg_its += res.iterations
        v_prev, v, hv = v, nxt, h_new
        if keep:
            iterates.append(v.copy())
    r = weak_residual(mesh, v, h)
    raise ConvergenceError(f"{regime} iteration did not converge in {maxit} steps (residual {r:.3e})", r, maxit)


def _vals(x):
    return x.values if isinstance(x, Field) else x


def solve_semilinear_contraction(mesh, hr, tol=1e-10, maxit=500, v0=None, lam1=None, cg_tol=CG_TOL,
                                 residual_tol=RESIDUAL_TOL, A=None, backend=None, keep_iterates=False):
    """Banach-Picard iteration v <- A^{-1} h_r(., v) for Lipschitz h_r.

    Refuses (``PreconditionError``) unless theta/m_lower < lambda_1 of the discrete
    Laplacian; records the energy-norm ratios of successive steps.
    """
    A = A if A is not None else assemble_laplacian(mesh)
    L = hr.lipschitz_bound
    if L is None:
        raise PreconditionError("contraction solver needs a declared Lipschitz constant theta")
    if lam1 is None:
        lam1 = smallest_eigenvalue(A, backend=backend)[0]
    if not L < lam1:
        raise PreconditionError(
            f"theta/m_lower = {L!r} is not below lambda_1 = {lam1!r}: the Picard map is not a contraction"
        )
    return _picard(mesh, _reduced(hr, mesh), v0, tol, maxit, cg_tol, residual_tol, A, backend,
                   "contraction", rate_bound=L / lam1, keep=keep_iterates)


def solve_semilinear_picard(mesh, hr, tol=1e-10, maxit=500, v0=None, cg_tol=CG_TOL,
                            residual_tol=RESIDUAL_TOL, A=None, backend=None):
    """Plain Picard iteration with no convergence guarantee (growth regime)."""
    A = A if A is not None else assemble_laplacian(mesh)
    return _picard(mesh, _reduced(hr, mesh), v0, tol, maxit, cg_tol, residual_tol, A, backend, "picard")


def solve_semilinear_monotone(mesh, hr, tol=1e-10, maxit=10_000, eig=None, cg_tol=CG_TOL,
                              residual_tol=RESIDUAL_TOL, A=None, backend=None, keep_iterates=False):
    """Monotone iteration from a supersolution for nondecreasing sublinear h_r.

    Supersolution: (A - c_h) w = c_h with c_h the growth constant of h_r
    (requires c_h < lambda_1).  Subsolution: eps phi_1 with eps halved from
    min(w/phi_1) until A(eps phi_1) <= h_r(eps phi_1); zero when no eps works.
    Every iterate is asserted nonincreasing and above the subsolution.
    """
    A = A if A is not None else assemble_laplacian(mesh)
    c_h = hr.growth_constant
    if c_h is None:
        raise PreconditionError("monotone solver needs the growth constant c")
    lam1, phi = eig if eig is not None else smallest_eigenvalue(A, backend=backend)
    if not c_h < lam1:
        raise SupersolutionError(
            f"growth constant c/min(1, m_lower) = {c_h!r} is not below lambda_1 = {lam1!r}: "
            "no supersolution from (-Delta - c) w = c"
        )
    h = _reduced(hr, mesh)
    w = cg_solve(A.shifted(c_h), np.full(mesh.size, c_h), tol=cg_tol, backend=backend).x
    flags = []

    phi = np.abs(phi)
    sub = np.zeros(mesh.size)
    if np.all(phi > 0):
        eps = float(np.min(w / phi))
        for _ in range(64):
            cand = eps * phi
            if np.all(lam1 * cand <= h(cand)):
                sub = cand
                break
            eps *= 0.5
    if not sub.any():
        flags.append(NO_NONTRIVIAL)

    v = w.copy()
    hv = h(v)
    res = cg_solve(A, hv - A @ v, tol=cg_tol, backend=backend)
    cg_its = res.iterations
    gaps, steps = [], []
    iterates = [v.copy()] if keep_iterates else None
    for k in range(1, maxit + 1):
        dv = res.x
        slack = 1e-9 * float(np.max(np.abs(dv))) + 1e-14 * max(1.0, float(np.max(np.abs(v))))
        up = dv > slack
        if up.any():
            i = int(np.flatnonzero(up)[0])
            raise OrderingError(f"iterate increased at node {i} by {dv[i]!r} in step {k}: (f6) fails on this range")
        v = v + dv
        below = v < sub - slack
        if below.any():
            i = int(np.flatnonzero(below)[0])
            raise OrderingError(
                f"iterate fell below the subsolution at node {i} ({v[i]!r} < {sub[i]!r}) in step {k}"
            )
        if keep_iterates:
            iterates.append(v.copy())
        step = float(np.max(np.abs(dv)))
        steps.append(step)
        gaps.append(float(np.max(v - sub)))
        h_new = h(v)
        full = False
        if step <= tol * max(1.0, float(np.max(np.abs(v)))):
            sol = Field(mesh, v)
            r = weak_residual(mesh, sol, h_new)
            if r <= residual_tol or not v.any():
                if NO_NONTRIVIAL not in flags and linf_norm(sol) <= 10 * tol:
                    flags.append(NO_NONTRIVIAL)
                return SolveReport(sol, k, r, "monotone", factors=[], gaps=gaps, cg_iterations=cg_its,
                                   flags=flags, subsolution=Field(mesh, sub), supersolution=Field(mesh, w),
                                   iterates=iterates)
            full = True
        if full:
            res = cg_solve(A, h_new, tol=cg_tol, x0=v, backend=backend)
            res = res._replace(x=res.x - v)
        else:
            res = cg_solve(A, h_new - hv, tol=cg_tol, backend=backend)
        hv = h_new
        cg_its += res.iterations
    r = weak_residual(mesh, v, h)
    raise ConvergenceError(f"monotone iteration did not converge in {maxit} steps (residual {r:.3e})", r, maxit)
