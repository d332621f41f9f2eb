"""The nonlocal driver: the scalar map S(r), its fixed point, and theorem-level conditions.

For each frozen r the reduced problem is solved for v_r, then u_r = M_r^{-1}(v_r)
and S(r) = int |grad u_r|^2.  A fixed point r* = S(r*) gives the solution u* = u_{r*}.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import ConvergenceError, FixedPointBracketError, KirchhoffError, SolverError, TrivialProblemError
from .linalg import CG_TOL, assemble_laplacian, assemble_schrodinger, smallest_eigenvalue
from .localsolve import (
    RESIDUAL_TOL,
    solve_linear,
    solve_semilinear_contraction,
    solve_semilinear_monotone,
    solve_semilinear_picard,
)
from .mesh import Field, apply_pointwise, gradient_energy
from .model.hypotheses import FAIL, INCONCLUSIVE, PASS, Report, Verdict, halton
from .model.nonlinearity import ReducedNonlinearity, alpha_limits, ratio_limits

__all__ = [
    "Problem",
    "SEvaluation",
    "FixedPointTrace",
    "evaluate_S",
    "find_fixed_point",
    "trace_S",
    "check_f5",
    "check_contraction",
    "continuity_probe_S",
    "nonlocal_residual",
    "sublinear_condition_holds",
]

FIXED_POINT_TOL = 1e-8
CHAIN_REL = 1e-10
MAX_DOUBLINGS = 40
COARSE_SCAN = 16
MAX_BISECTIONS = 200


class Problem:
    """-div(m(u, |grad u|^2) grad u) = f(x, u) on ``mesh`` with u = 0 on the boundary."""

    def __init__(self, mesh, model, nonlinearity, solver_tol=1e-10, quad_tol=1e-10, cg_tol=CG_TOL,
                 residual_tol=RESIDUAL_TOL, maxit=None, backend=None):
        if nonlinearity.dim != mesh.dim:
            raise ValueError(f"nonlinearity is {nonlinearity.dim}D but the mesh is {mesh.dim}D")
        self.mesh = mesh
        self.model = model
        self.nonlinearity = nonlinearity
        self.solver_tol = solver_tol
        self.quad_tol = quad_tol
        self.cg_tol = cg_tol
        self.residual_tol = residual_tol
        self.maxit = maxit
        self.backend = backend
        self.A = assemble_laplacian(mesh)
        self._eig = None
        self._linear = None
        self._lock = threading.Lock()

    @property
    def regime(self):
        return self.nonlinearity.regime

    @property
    def m_lower(self):
        return self.model.m_lower

    @property
    def linear(self):
        return self.regime == "source"

    def eig(self):
        """(lambda_1, phi_1) of the discrete Laplacian, computed once."""
        with self._lock:
            if self._eig is None:
                self._eig = smallest_eigenvalue(self.A, backend=self.backend)
            return self._eig

    @property
    def lambda1(self):
        return self.eig()[0]

    def primitive(self, r):
        return self.model.primitive(r, self.quad_tol)

    def reduced(self, r):
        return ReducedNonlinearity(self.nonlinearity, self.primitive(r))

    def solve_reduced(self, r):
        """The local solve for this regime at frozen r (cached once in the linear regime)."""
        mesh = self.mesh
        kw = {"backend": self.backend, "cg_tol": self.cg_tol, "A": self.A, "residual_tol": self.residual_tol}
        if self.linear:
            with self._lock:
                if self._linear is None:
                    f = self.nonlinearity(mesh.coords(), 0.0)
                    f = np.broadcast_to(f, (mesh.size,))
                    self._linear = solve_linear(mesh, f, tol=self.cg_tol, A=self.A, backend=self.backend)
                return self._linear
        hr = self.reduced(r)
        if self.maxit is not None:
            kw["maxit"] = self.maxit
        if self.regime == "lipschitz":
            return solve_semilinear_contraction(mesh, hr, tol=self.solver_tol, lam1=self.lambda1, **kw)
        if self.regime == "sublinear":
            return solve_semilinear_monotone(mesh, hr, tol=self.solver_tol, eig=self.eig(), **kw)
        return solve_semilinear_picard(mesh, hr, tol=self.solver_tol, **kw)

    def to_dict(self):
        return {
            "mesh": self.mesh.to_dict(),
            "model": self.model.to_dict(),
            "nonlinearity": self.nonlinearity.to_dict(),
            "solver_tol": self.solver_tol,
            "quad_tol": self.quad_tol,
            "cg_tol": self.cg_tol,
            "residual_tol": self.residual_tol,
        }


@dataclass
class SEvaluation:
    r: float
    S: float
    T: float
    V: float
    u: Field
    v: Field
    report: object = None

    @property
    def g(self):
        return self.S - self.r

    def chain_ok(self, m_lower, rel=CHAIN_REL):
        """S <= T/m_lower <= V/m_lower^2 within ``rel`` relative slack."""
        a, b, c = self.S, self.T / m_lower, self.V / m_lower**2
        return a <= b + rel * abs(b) and b <= c + rel * abs(c)

    def row(self):
        return {"r": self.r, "S": self.S, "T": self.T, "V": self.V}


def evaluate_S(problem, r):
    """(S, T, V, u_r, v_r) at frozen r, packed in an :class:`SEvaluation`."""
    r = float(r)
    if not r >= 0:
        raise ValueError(f"r must be nonnegative, got {r!r}")
    try:
        rep = problem.solve_reduced(r)
        v = rep.solution
        pm = problem.primitive(r)
        u = apply_pointwise(v, pm.invert)
    except KirchhoffError as exc:
        if exc.args:
            exc.args = (f"{exc.args[0]} [at r={r!r}]",) + exc.args[1:]
        raise
    w = problem.mesh.cell_measure
    S = gradient_energy(u)
    T = w * float(u.values @ (problem.A @ v.values))
    V = gradient_energy(v)
    return SEvaluation(r, S, T, V, u, v, rep)


@dataclass
class FixedPointTrace:
    samples: list = field(default_factory=list)
    brackets: list = field(default_factory=list)
    r_star: float = math.nan
    residual: float = math.nan
    u: Field | None = None
    v: Field | None = None
    energy_check: float = math.nan
    nonlocal_residual: float = math.nan
    report: object = None

    def chain_ok(self, m_lower, rel=CHAIN_REL):
        return all(e.chain_ok(m_lower, rel) for e in self.samples)

    def to_dict(self):
        return {
            "r_star": self.r_star,
            "fixed_point_residual": self.residual,
            "energy_check": self.energy_check,
            "nonlocal_residual": self.nonlocal_residual,
            "evaluations": len(self.samples),
            "brackets": [list(b) for b in self.brackets],
            "samples": [e.row() for e in self.samples],
        }


class _Cache:
    """Memoized S evaluations; independent of call order since each r is solved from scratch."""

    def __init__(self, problem):
        self.problem = problem
        self.seen = {}
        self.order = []

    def __call__(self, r):
        r = float(r)
        e = self.seen.get(r)
        if e is None:
            e = self.seen[r] = evaluate_S(self.problem, r)
            self.order.append(e)
        return e


def find_fixed_point(problem, tol=FIXED_POINT_TOL):
    """Bisection on g(r) = S(r) - r over the leftmost sign change in [0, R].

    R starts at V(0)/m_lower^2 + 1 and doubles (at most 40 times) until S(R) < R.
    """
    ev = _Cache(problem)
    trace = FixedPointTrace()
    e0 = ev(0.0)
    if e0.S <= tol:
        trace.samples = ev.order
        raise TrivialProblemError(f"S(0) = {e0.S!r} <= tol: the reduced problem has only the trivial solution")
    R = e0.V / problem.m_lower**2 + 1.0
    eR = ev(R)
    k = 0
    while eR.g >= 0:
        k += 1
        if k > MAX_DOUBLINGS:
            raise FixedPointBracketError(
                f"S(R) >= R up to R = {R!r}: S is not bounded by the identity (V(r) unbounded?)",
                samples=[e.row() for e in ev.order],
            )
        R *= 2.0
        eR = ev(R)
    trace.brackets.append((0.0, R))

    # coarse scan for the leftmost sign change
    a, b = 0.0, R
    grid = [R * j / COARSE_SCAN for j in range(COARSE_SCAN + 1)]
    hit = None
    prev = e0
    for r in grid[1:]:
        e = ev(r)
        if abs(e.g) <= tol:
            hit = e
            break
        if e.g < 0 < prev.g:
            a, b = prev.r, r
            break
        prev = e
    if hit is None:
        trace.brackets.append((a, b))
        best = min((ev(a), ev(b)), key=lambda e: abs(e.g))
        for _ in range(MAX_BISECTIONS):
            if abs(best.g) <= tol:
                break
            mid = 0.5 * (a + b)
            if mid <= a or mid >= b:
                break
            e = ev(mid)
            if abs(e.g) < abs(best.g):
                best = e
            if e.g > 0:
                a = mid
            else:
                b = mid
            trace.brackets.append((a, b))
        hit = best
    trace.samples = ev.order
    trace.r_star = hit.r
    trace.residual = abs(hit.g)
    trace.u, trace.v, trace.report = hit.u, hit.v, hit.report
    if trace.residual > tol:
        raise ConvergenceError(
            f"bisection stalled at r = {hit.r!r} with |S(r) - r| = {trace.residual:.3e} > {tol:g} (S discontinuous?)",
            trace.residual,
            len(trace.brackets),
        )
    trace.energy_check = abs(gradient_energy(Field(problem.mesh, hit.u.values.copy())) - hit.r)
    trace.nonlocal_residual = nonlocal_residual(problem, hit.u, hit.r)
    return trace


def trace_S(problem, r_max, samples, tol=FIXED_POINT_TOL, workers=1):
    """Uniform r-grid samples of (r, S, T, V) and the fixed points found by sign change.

    Returns (evaluations, crossings); each crossing is a dict with the bracket
    and the bisection-refined root.
    """
    rs = [0.0] if samples <= 1 or r_max == 0 else [r_max * j / (samples - 1) for j in range(samples)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            evals = list(pool.map(lambda r: evaluate_S(problem, r), rs))
    else:
        evals = [evaluate_S(problem, r) for r in rs]
    crossings = []
    for e1, e2 in zip(evals, evals[1:]):
        if e1.g == 0:
            crossings.append({"a": e1.r, "b": e1.r, "r": e1.r, "residual": 0.0})
        elif e1.g * e2.g < 0:
            a, b, ga = e1.r, e2.r, e1.g
            best = min((e1, e2), key=lambda e: abs(e.g))
            for _ in range(MAX_BISECTIONS):
                if abs(best.g) <= tol:
                    break
                mid = 0.5 * (a + b)
                if mid <= a or mid >= b:
                    break
                e = evaluate_S(problem, mid)
                if abs(e.g) < abs(best.g):
                    best = e
                if (e.g > 0) == (ga > 0):
                    a = mid
                else:
                    b = mid
            crossings.append({"a": e1.r, "b": e2.r, "r": best.r, "residual": abs(best.g)})
    if evals and evals[-1].g == 0 and len(evals) > 1:
        e = evals[-1]
        crossings.append({"a": e.r, "b": e.r, "r": e.r, "residual": 0.0})
    return evals, crossings


def nonlocal_residual(problem, u, r):
    """||-div(m(u, r) grad u) - f(x, u)|| / ||f(x, u)|| with a fresh flux assembly.

    Each edge carries the mean of m(., r) over [u_i, u_j], integrated afresh by
    adaptive Simpson, so the check does not reuse the cached primitive.
    """
    mesh = problem.mesh
    k = kernels.get(problem.backend)
    prog = problem.model.program
    tol = problem.quad_tol
    vals = u.values if isinstance(u, Field) else np.asarray(u, dtype=float)
    g = np.pad(vals.reshape(mesh.shape[::-1]), 1)

    def flux(a, b, h):
        # mean coefficient times the difference, i.e. (M(b) - M(a)) / h^2
        fl = np.empty(a.size)
        for i, (x, y) in enumerate(zip(a.ravel(), b.ravel())):
            val, status, bad = k.simpson(prog, r, float(x), float(y), tol)
            if status:
                raise SolverError(f"non-finite m at t={bad!r} in the residual check")
            fl[i] = val
        return fl.reshape(a.shape) / (h * h)

    if mesh.dim == 1:
        fx = flux(g[:-1], g[1:], mesh.h[0])  # (M(u_{i+1}) - M(u_i)) / h^2 per edge
        div = fx[:-1] - fx[1:]
    else:
        hx, hy = mesh.h
        fx = flux(g[1:-1, :-1], g[1:-1, 1:], hx)
        fy = flux(g[:-1, 1:-1], g[1:, 1:-1], hy)
        div = (fx[:, :-1] - fx[:, 1:]) + (fy[:-1, :] - fy[1:, :])
        div = div.ravel()
    f = np.broadcast_to(problem.nonlinearity(mesh.coords(), vals), vals.shape)
    nf = float(np.linalg.norm(f))
    nr = float(np.linalg.norm(div.ravel() - f))
    return nr / nf if nf > 0 else nr


# ------------------------------------------------------------- conditions


def _lambda1(problem, alpha):
    op = assemble_schrodinger(problem.mesh, alpha, laplacian=problem.A)
    return smallest_eigenvalue(op, backend=problem.backend)[0]


def _sign_verdicts(problem, a0, ainf):
    """(left, right, lam_left, lam_right): lambda_1(-Delta - a0) < 0 < lambda_1(-Delta - ainf)."""
    if np.any(np.isinf(a0)):
        lam_l, left = -math.inf, True  # an infinite limit drives the Rayleigh quotient to -inf
    else:
        lam_l = _lambda1(problem, a0)
        left = lam_l < 0
    lam_r = problem.lambda1 if not np.any(ainf) else _lambda1(problem, ainf)
    return left, lam_r > 0, lam_l, lam_r


def check_f5(problem, r_samples=(0.0, 1.0, 2.0, 5.0), hypotheses=None):
    """Per-r verdicts on lambda_1(-Delta - alpha_0^r) < 0 < lambda_1(-Delta - alpha_inf^r).

    When (m3) and (f6) hold (taken from ``hypotheses`` if given, else checked
    directly) the r-free condition
    lambda_1(-Delta - alpha_0/m_lower) < 0 < lambda_1(-Delta - alpha_inf/m_lower)
    is reported too; it implies the per-r condition.
    """
    nl, cm = problem.nonlinearity, problem.model
    if nl.regime != "sublinear":
        raise ValueError("check_f5 applies to the sublinear regime")
    coords = problem.mesh.coords()
    report = Report("f5", len(r_samples))
    for r in r_samples:
        a0, ainf = alpha_limits(nl, cm, r, coords)
        left, right, lam_l, lam_r = _sign_verdicts(problem, a0, ainf)
        w = {"r": r, "lambda_left": lam_l, "lambda_right": lam_r}
        verdict = PASS if (left and right) else FAIL
        why = "" if verdict == PASS else ("left inequality fails" if not left else "right inequality fails")
        report.add(Verdict(f"f5[r={float(r)!r}]", verdict, problem.mesh.size, w, why))

    if hypotheses is not None and "m3" in hypotheses and "f6" in hypotheses:
        m3 = hypotheses["m3"].passed
        f6 = hypotheses["f6"].passed
    else:
        m3 = all(cm.at_zero(r) == cm.m_lower for r in r_samples)
        tt = np.linspace(0.0, 10.0, 201)
        vals = np.broadcast_to(nl(tuple(c[:, None] for c in coords), tt[None, :]), (coords[0].size, tt.size))
        f6 = bool(np.all(np.diff(vals, axis=1) >= 0))
    if m3 and f6:
        alpha0, alphainf = ratio_limits(nl, coords)
        left, right, lam_l, lam_r = _sign_verdicts(problem, alpha0 / cm.m_lower, alphainf / cm.m_lower)
        w = {"lambda_left": lam_l, "lambda_right": lam_r}
        if left and right:
            report.add(Verdict("condicaoBO", PASS, problem.mesh.size, w, "r-free condition holds; implies f5"))
        else:
            side = "left" if not left else "right"
            report.add(Verdict("condicaoBO", FAIL, problem.mesh.size, w, f"r-free condition: {side} inequality fails"))
    else:
        report.add(Verdict("condicaoBO", INCONCLUSIVE, 0, detail="needs (m3) and (f6)"))
    return report


def sublinear_condition_holds(report):
    """True when the r-free condition passes, else when every per-r verdict passes."""
    if report["condicaoBO"].passed:
        return True
    return all(v.passed for k, v in report.items.items() if k.startswith("f5["))


def check_contraction(problem, r_samples=(0.0, 1.0, 2.0), pairs=512):
    """theta < m_lower lambda_1, the sampled Lipschitz bound of h_r, and nu < lambda_1 when delta = 1."""
    nl = problem.nonlinearity
    if nl.regime != "lipschitz":
        raise ValueError("check_contraction applies to the Lipschitz regime")
    lam1 = problem.lambda1
    m_lo = problem.m_lower
    report = Report("contraction", pairs)
    if nl.theta is None:
        report.add(Verdict("theta", FAIL, 0, detail="theta not declared"))
        return report
    margin = m_lo * lam1 - nl.theta
    w = {"theta": nl.theta, "m_lower_lambda1": m_lo * lam1, "margin": margin}
    report.add(Verdict("theta", PASS if margin > 0 else FAIL, 1, w,
                       "theta < m_lower lambda_1" if margin > 0 else "theta >= m_lower lambda_1"))

    coords = problem.mesh.coords()
    bound = nl.theta / m_lo
    u = halton(pairs, 3, skip=23)
    idx = np.minimum((u[:, 0] * problem.mesh.size).astype(int), problem.mesh.size - 1)
    pts = tuple(c[idx] for c in coords)
    worst, wit, n = 0.0, None, 0
    for r in r_samples:
        pm = problem.primitive(r)
        smax = max(abs(pm.eval(10.0)), abs(pm.eval(-10.0)))
        s1, s2 = smax * (2 * u[:, 1] - 1), smax * (2 * u[:, 2] - 1)
        h1 = np.broadcast_to(nl(pts, pm.invert(s1)), s1.shape)
        h2 = np.broadcast_to(nl(pts, pm.invert(s2)), s2.shape)
        ds = np.abs(s1 - s2)
        ok = ds > 0
        slope = np.zeros_like(ds)
        slope[ok] = np.abs(h1 - h2)[ok] / ds[ok]
        n += int(ok.sum())
        j = int(np.argmax(slope))
        if slope[j] > worst:
            worst = float(slope[j])
            wit = {"r": r, "s1": s1[j], "s2": s2[j], "slope": slope[j]}
    tol = bound * 1e-9 + 1e-15
    report.add(Verdict("h_lipschitz", PASS if worst <= bound + tol else FAIL, n, wit if worst > bound + tol else None,
                       f"max sampled slope {worst!r} vs theta/m_lower = {bound!r}"))
    if nl.delta == 1:
        if nl.nu is None:
            report.add(Verdict("delta_one", FAIL, 0, detail="delta = 1 needs nu"))
        else:
            ok = nl.nu < lam1
            report.add(Verdict("delta_one", PASS if ok else FAIL, 1, {"nu": nl.nu, "lambda1": lam1},
                               "nu < lambda_1" if ok else "nu >= lambda_1"))
    return report


def continuity_probe_S(problem, r0, spread=None, levels=12):
    """Oscillation of S on r0 +- 2^-k spread, k = 0..levels; passes when it decays.

    Passing is an empirical continuity certificate, not a proof.
    """
    r0 = float(r0)
    spread = float(spread) if spread is not None else (min(1.0, r0) if r0 > 0 else 1.0)
    S0 = evaluate_S(problem, r0).S
    osc = []
    for k in range(levels + 1):
        d = spread * 2.0**-k
        vals = [evaluate_S(problem, r0 + d).S]
        if r0 - d >= 0:
            vals.append(evaluate_S(problem, r0 - d).S)
        osc.append(max(abs(s - S0) for s in vals))
    floor = 1e-12 * max(1.0, abs(S0))
    decays = osc[-1] <= max(1e-2 * osc[0], floor)
    report = Report("continuity", levels + 1)
    w = None if decays else {"r0": r0, "osc_first": osc[0], "osc_last": osc[-1]}
    report.add(Verdict("S_continuity", PASS if decays else FAIL, 2 * levels + 3, w,
                       "oscillation decays" if decays else "oscillation does not decay: S looks discontinuous"))
    report.oscillation = osc
    return report
