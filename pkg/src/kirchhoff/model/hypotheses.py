"""Sampling verifiers for the structural hypotheses on m and f and for the
properties of the primitive M_r (monotone diffeomorphism, Lipschitz inverse,
joint continuity, monotone ratio).

Every check is deterministic: samples come from an unscrambled Halton sequence.
Failures are data, never exceptions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .. import expr
from ..errors import BracketError, ModelError, PrimitiveError
from .nonlinearity import space_vars

__all__ = ["Verdict", "Report", "halton", "check_hypotheses", "verify_lemma"]

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


def halton(n, d, skip=1):
    """First ``n`` points of the unscrambled Halton sequence in [0, 1)^d (the origin skipped)."""
    sampler = qmc.Halton(d=d, scramble=False)
    if skip:
        sampler.fast_forward(skip)
    return sampler.random(n)


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else repr(v)


@dataclass
class Verdict:
    name: str
    verdict: str
    samples: int = 0
    witness: dict | None = None
    detail: str = ""

    @property
    def passed(self):
        return self.verdict == PASS

    def to_dict(self):
        d = {"verdict": self.verdict, "samples": int(self.samples)}
        if self.witness is not None:
            d["witness"] = {k: _num(v) for k, v in self.witness.items()}
        if self.detail:
            d["detail"] = self.detail
        return d


@dataclass
class Report:
    title: str
    budget: int
    items: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    def add(self, verdict):
        self.items[verdict.name] = verdict
        return verdict

    def __getitem__(self, name):
        return self.items[name]

    def __contains__(self, name):
        return name in self.items

    def failures(self, names=None):
        return [v for k, v in self.items.items() if v.verdict == FAIL and (names is None or k in names)]

    def ok(self, names=None):
        return not self.failures(names)

    def to_dict(self):
        return {
            "title": self.title,
            "budget": int(self.budget),
            "verdicts": {k: v.to_dict() for k, v in self.items.items()},
            "warnings": list(self.warnings),
        }


def _first(mask):
    idx = np.argwhere(mask)
    return tuple(int(i) for i in idx[0]) if len(idx) else None


# ----------------------------------------------------------------- m hypotheses


def _m_grid(cm, budget, t_max, r_max):
    n_r = max(8, math.isqrt(budget))
    n_t = max(8, budget // n_r)
    r = np.concatenate([[0.0], r_max * halton(n_r - 1, 1)[:, 0]])
    t = np.sort(t_max * (2.0 * halton(n_t, 1, skip=7)[:, 0] - 1.0))
    t = np.concatenate([t, [0.0]])
    return np.sort(r), np.sort(t)


def _check_m(cm, report, budget, t_max, r_max):
    r, t = _m_grid(cm, budget, t_max, r_max)
    n = r.size * t.size
    try:
        vals = cm(t[None, :], r[:, None])
    except (expr.ExprNonFiniteError, expr.ExprDomainError) as exc:
        w = {"t": float(t[exc.index[1]]), "r": float(r[exc.index[0]])} if getattr(exc, "index", None) else None
        for name in ("m0", "m1", "m2"):
            report.add(Verdict(name, FAIL, n, w, f"m not finite on the sample grid: {exc}"))
        return
    vals = np.broadcast_to(vals, (r.size, t.size))

    # (m0): local oscillation must shrink with the probe radius
    k = min(n, 512)
    pts = halton(k, 2, skip=3)
    pt, pr = t_max * (2 * pts[:, 0] - 1), r_max * pts[:, 1]
    base = np.broadcast_to(cm(pt, pr), pt.shape)

    def osc(d):
        out = np.zeros_like(pt)
        for dt, dr in ((d, 0.0), (-d, 0.0), (0.0, d), (d, d)):
            out = np.maximum(out, np.abs(np.broadcast_to(cm(pt + dt, pr + dr), pt.shape) - base))
        return out

    try:
        coarse, fine = osc(1e-3), osc(1e-9)
    except (expr.ExprNonFiniteError, expr.ExprDomainError) as exc:
        report.add(Verdict("m0", FAIL, k, None, f"m not finite near the samples: {exc}"))
    else:
        bad = fine > 1e-2 * coarse + 1e-9 * (1.0 + np.abs(base))
        i = _first(bad)
        if i is None:
            report.add(Verdict("m0", PASS, k, detail="oscillation decays under refinement"))
        else:
            j = i[0]
            report.add(
                Verdict("m0", FAIL, k, {"t": pt[j], "r": pr[j], "osc_coarse": coarse[j], "osc_fine": fine[j]},
                        "oscillation does not decay")
            )

    # (m1)
    j = np.unravel_index(int(np.argmin(vals)), vals.shape)
    vmin = float(vals[j])
    if vmin >= cm.m_lower * (1.0 - 1e-12):
        report.add(Verdict("m1", PASS, n, detail=f"min m = {vmin!r} >= m_lower = {cm.m_lower!r}"))
    else:
        report.add(Verdict("m1", FAIL, n, {"t": t[j[1]], "r": r[j[0]], "m": vmin}, "m below the declared m_lower"))

    # (m2): strictly decreasing on t < 0, strictly increasing on t > 0
    pos, neg = t > 0, t < 0
    wit = None
    vp = vals[:, pos]
    tp = t[pos]
    bad = np.diff(vp, axis=1) <= 0
    if bad.any():
        a, b = _first(bad)
        wit = {"t1": tp[b], "t2": tp[b + 1], "r": r[a], "m1": vp[a, b], "m2": vp[a, b + 1]}
    vn = vals[:, neg]
    tn = t[neg]
    bad = np.diff(vn, axis=1) >= 0
    if wit is None and bad.any():
        a, b = _first(bad)
        wit = {"t1": tn[b], "t2": tn[b + 1], "r": r[a], "m1": vn[a, b], "m2": vn[a, b + 1]}
    if wit is None:
        report.add(Verdict("m2", PASS, n))
    else:
        report.add(Verdict("m2", FAIL, n, wit, "m(., r) not strictly monotone on a half-line"))

    # (m3): m(0, r) equals the lower bound for every r
    m0 = vals[:, t == 0.0][:, 0]
    bad = np.abs(m0 - cm.m_lower) > 1e-12 * cm.m_lower
    i = _first(bad)
    if i is None:
        report.add(Verdict("m3", PASS, r.size, detail="m(0, r) = m_lower"))
    else:
        report.add(Verdict("m3", FAIL, r.size, {"r": r[i[0]], "m(0,r)": m0[i[0]]}, "m(0, r) differs from m_lower"))


# ----------------------------------------------------------------- f hypotheses


def _space_points(dim, bounds, n):
    u = halton(n, dim, skip=11)
    return tuple(bounds[k][0] + (bounds[k][1] - bounds[k][0]) * u[:, k] for k in range(dim))


def _eval_grid(nl, coords, t, raw=False):
    """f on the (points x ladder) grid, shape (n_points, n_t)."""
    cs = tuple(c[:, None] for c in coords)
    fn = nl.raw if raw else nl
    return np.broadcast_to(fn(cs, t[None, :]), (coords[0].size, t.size))


def _pt(coords, i):
    return {v: coords[k][i] for k, v in enumerate(space_vars(len(coords)))}


def _check_secants(name, coords, t, vals, bound, report, n):
    """|f(x, t1) - f(x, t2)| <= bound |t1 - t2| over consecutive and far-apart pairs."""
    half = t.size // 2
    pairs = [(np.arange(t.size - 1), np.arange(1, t.size)), (np.arange(half), np.arange(half, 2 * half))]
    for a, b in pairs:
        df = np.abs(vals[:, b] - vals[:, a])
        dt = np.abs(t[b] - t[a])
        lim = bound * dt * (1.0 + 1e-9) + 4e-16 * np.maximum(1.0, np.maximum(np.abs(vals[:, a]), np.abs(vals[:, b])))
        bad = df > lim
        if bad.any():
            i, j = _first(bad)
            w = _pt(coords, i) | {"t1": t[a[j]], "t2": t[b[j]], "slope": df[i, j] / dt[j]}
            return report.add(Verdict(name, FAIL, n, w, f"secant slope exceeds {bound!r}"))
    return report.add(Verdict(name, PASS, n, detail=f"secant slopes <= {bound!r}"))


def _check_f(cm, nl, report, budget, bounds, t_f_max, r_max):
    n_x = max(8, math.isqrt(budget))
    n_t = max(8, budget // n_x)
    coords = _space_points(nl.dim, bounds, n_x)
    n = n_x * n_t

    if nl.regime == "source":
        vals = _eval_grid(nl, coords, np.zeros(1))
        report.add(Verdict("source", PASS, n_x, detail="f does not depend on t"))
        if np.any(vals != 0):
            report.add(Verdict("nontrivial", PASS, n_x, detail="f not identically zero"))
        else:
            report.add(Verdict("nontrivial", FAIL, n_x, _pt(coords, 0), "f vanishes at every sample (S(0) = 0)"))
        return

    if nl.regime == "growth":
        t = t_f_max * (2.0 * halton(n_t, 1, skip=5)[:, 0] - 1.0)
        vals = _eval_grid(nl, coords, t)
        bound = nl.c * (1.0 + np.abs(t) ** nl.p)
        bad = np.abs(vals) > bound[None, :] * (1.0 + 1e-12)
        if bad.any():
            i, j = _first(bad)
            report.add(Verdict("C", FAIL, n, _pt(coords, i) | {"t": t[j], "f": vals[i, j]}, "|f| > c(1+|t|^p)"))
        else:
            report.add(Verdict("C", PASS, n))
        # 2* = +inf for N in {1, 2}, so only p > 1 is required
        if nl.p > 1:
            report.add(Verdict("C_exponent", PASS, 1, detail=f"1 < p = {nl.p!r} < 2*-1 = inf"))
        else:
            report.add(Verdict("C_exponent", FAIL, 1, {"p": nl.p}, "p must exceed 1"))
        return

    if nl.regime == "sublinear":
        t = np.sort(10.0 ** (-6.0 + 8.0 * halton(n_t, 1, skip=5)[:, 0]))
        t = np.concatenate([[0.0], t[t <= t_f_max], [t_f_max]])
        t = np.unique(t)
        vals = _eval_grid(nl, coords, t)
        n = vals.size
        # (f1)
        bad = (vals < 0) | (vals > nl.c * (1.0 + t[None, :]) * (1.0 + 1e-12))
        if bad.any():
            i, j = _first(bad)
            report.add(Verdict("f1", FAIL, n, _pt(coords, i) | {"t": t[j], "f": vals[i, j]}, "0 <= f <= c(1+t) violated"))
        else:
            report.add(Verdict("f1", PASS, n))
        # (f2): continuity in t
        tp = t[1:]
        d = np.abs(_eval_grid(nl, coords, tp + 1e-9) - vals[:, 1:])
        D = np.abs(_eval_grid(nl, coords, tp + 1e-3) - vals[:, 1:])
        bad = d > 1e-2 * D + 1e-9 * (1.0 + np.abs(vals[:, 1:]))
        if bad.any():
            i, j = _first(bad)
            report.add(Verdict("f2", FAIL, n, _pt(coords, i) | {"t": tp[j]}, "oscillation in t does not decay"))
        else:
            report.add(Verdict("f2", PASS, n))
        # (f3): bounded in x for each t
        report.add(Verdict("f3", PASS, n, detail=f"max |f| = {float(np.max(np.abs(vals)))!r} on samples"))
        # (f4): f(x, t)/t nonincreasing on t > 0
        q = vals[:, 1:] / tp[None, :]
        bad = np.diff(q, axis=1) > 1e-12 * np.maximum(1.0, np.abs(q[:, :-1]))
        if bad.any():
            i, j = _first(bad)
            report.add(Verdict("f4", FAIL, n, _pt(coords, i) | {"t1": tp[j], "t2": tp[j + 1]}, "f(x,t)/t increases"))
        else:
            report.add(Verdict("f4", PASS, n))
        # (f6): f nondecreasing in t
        bad = np.diff(vals, axis=1) < -1e-12 * np.maximum(1.0, np.abs(vals[:, :-1]))
        if bad.any():
            i, j = _first(bad)
            report.add(Verdict("f6", FAIL, n, _pt(coords, i) | {"t1": t[j], "t2": t[j + 1]}, "f decreases in t"))
        else:
            report.add(Verdict("f6", PASS, n))
        if cm is not None:
            _check_claim(cm, nl, coords, tp, vals[:, 1:], report, r_max)
        return

    # lipschitz regime
    t = np.sort(t_f_max * (2.0 * halton(n_t, 1, skip=5)[:, 0] - 1.0))
    vals = _eval_grid(nl, coords, t)
    f0 = _eval_grid(nl, coords, np.zeros(1))[:, 0]
    if np.any(f0 != 0):
        report.add(Verdict("f7", PASS, n_x, detail="f(x, 0) not identically zero"))
    else:
        report.add(Verdict("f7", FAIL, n_x, _pt(coords, 0), "f(x, 0) = 0 at every sample"))
    mu = nl.mu(tuple(c[:, None] for c in coords))
    if mu is None or nl.nu is None or nl.delta is None:
        report.add(Verdict("f8", INCONCLUSIVE, 0, detail="mu, nu or delta not declared"))
    else:
        mu = np.broadcast_to(mu, vals.shape)
        bound = mu + nl.nu * np.abs(t[None, :]) ** nl.delta
        bad = np.abs(vals) > bound * (1.0 + 1e-12) + 1e-15
        if not 0 < nl.delta <= 1:
            report.add(Verdict("f8", FAIL, 1, {"delta": nl.delta}, "delta must lie in (0, 1]"))
        elif bad.any():
            i, j = _first(bad)
            report.add(Verdict("f8", FAIL, n, _pt(coords, i) | {"t": t[j], "f": vals[i, j]}, "|f| > mu + nu|t|^delta"))
        else:
            report.add(Verdict("f8", PASS, n))
    if nl.theta is None:
        report.add(Verdict("f9", INCONCLUSIVE, 0, detail="theta not declared"))
        return
    _check_secants("f9", coords, t, vals, nl.theta, report, n)
    if cm is not None:
        _check_reduced_lipschitz(cm, nl, coords, report, n_t, r_max)


def _claim_levels(r_max):
    return (0.0, 0.5 * r_max, r_max)


def _check_claim(cm, nl, coords, tp, vals, report, r_max):
    """h_r(x, s) = f(x, t) at s = M_r(t): growth bound and decreasing ratio."""
    n = 0
    c_h = nl.c / min(1.0, cm.m_lower)
    for r in _claim_levels(r_max):
        try:
            s = cm.primitive(r).eval(tp)
        except PrimitiveError as exc:
            report.add(Verdict("claim", FAIL, n, {"r": r}, f"primitive failed: {exc}"))
            return
        n += vals.size
        bad = np.abs(vals) > c_h * (1.0 + np.abs(s))[None, :] * (1.0 + 1e-12)
        if bad.any():
            i, j = _first(bad)
            w = _pt(coords, i) | {"r": r, "s": s[j], "h": vals[i, j]}
            report.add(Verdict("claim", FAIL, n, w, "|h_r| > c(1+|s|)"))
            return
        q = vals / s[None, :]
        bad = np.diff(q, axis=1) > 1e-12 * np.maximum(1.0, np.abs(q[:, :-1]))
        if bad.any():
            i, j = _first(bad)
            w = _pt(coords, i) | {"r": r, "s1": s[j], "s2": s[j + 1]}
            report.add(Verdict("claim", FAIL, n, w, "h_r(x,s)/s increases"))
            return
    report.add(Verdict("claim", PASS, n, detail=f"|h_r| <= {c_h!r}(1+|s|) and h_r/s decreasing"))


def _check_reduced_lipschitz(cm, nl, coords, report, n_t, r_max):
    bound = nl.theta / cm.m_lower
    n = 0
    for r in _claim_levels(r_max):
        pm = cm.primitive(r)
        try:
            s_max = max(abs(pm.eval(-10.0)), abs(pm.eval(10.0)))
        except PrimitiveError as exc:
            report.add(Verdict("h_lipschitz", FAIL, n, {"r": r}, f"primitive failed: {exc}"))
            return
        s = np.sort(s_max * (2.0 * halton(n_t, 1, skip=13)[:, 0] - 1.0))
        try:
            vals = _eval_grid(nl, coords, pm.invert(s))
        except PrimitiveError as exc:
            report.add(Verdict("h_lipschitz", FAIL, n, {"r": r}, f"inversion failed: {exc}"))
            return
        n += vals.size
        v = _check_secants("h_lipschitz", coords, s, vals, bound, Report("", 0), vals.size)
        if not v.passed:
            v.witness["r"] = r
            v.samples = n
            report.add(v)
            return
    report.add(Verdict("h_lipschitz", PASS, n, detail=f"sampled Lipschitz constant of h_r <= theta/m_lower = {bound!r}"))


def check_hypotheses(cm, nl=None, budget=4096, t_max=3.0, r_max=5.0, bounds=None, t_f_max=10.0):
    """Verdicts for (m0)-(m3) on ``cm`` and, if given, the regime hypotheses on ``nl``."""
    report = Report("hypotheses", budget)
    _check_m(cm, report, budget, t_max, r_max)
    if nl is not None:
        bounds = bounds or tuple((0.0, 1.0) for _ in range(nl.dim))
        _check_f(cm, nl, report, budget, bounds, t_f_max, r_max)
    return report


# ----------------------------------------------------------------- primitive


def verify_lemma(cm, budget=10_000, t_max=3.0, r_max=2.0, tol=1e-10, slack=1e-9, levels=100):
    """Property suite for M_r over ``budget`` stratified Halton samples (r-levels x t-ladders).

    Checks: (a) M_r(0) = 0, strictly increasing, M_r(t) >= m_lower t on t >= 0 (mirrored);
    inverse consistency |M_r(M_r^{-1}(s)) - s| <= 10 tol max(1, |s|);
    (b) |M_r^{-1}(s1) - M_r^{-1}(s2)| <= |s1 - s2| / m_lower + slack;
    (c) halving perturbations (s_n, r_n) -> (s0, r0) give inverse gaps shrinking >= 16x over the last 8 of 16 halvings;
    (d) M_r^{-1}(s)/s nonincreasing in |s|.
    """
    report = Report("lemma", budget)
    m_lo = cm.m_lower
    n_t = max(8, -(-budget // levels))
    rs = np.sort(np.concatenate([[0.0], r_max * halton(levels - 1, 1)[:, 0]]))
    ladder = np.sort(t_max * (2.0 * halton(n_t, 1, skip=17)[:, 0] - 1.0))
    n = rs.size * ladder.size
    found = {}

    def fail(key, witness, detail):
        if key not in found:
            found[key] = (witness, detail)

    worst_inv = 0.0
    for r in rs:
        pm = cm.primitive(float(r), tol)
        try:
            M = pm.eval(ladder)
            M0 = pm.eval(0.0)
        except PrimitiveError as exc:
            fail("a", {"r": r}, f"primitive failed: {exc}")
            continue
        # (a)
        if M0 != 0.0:
            fail("a", {"r": r, "M(0)": M0}, "M_r(0) != 0")
        bad = np.diff(M) <= 0
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            fail("a", {"r": r, "t1": ladder[j], "t2": ladder[j + 1]}, "M_r not strictly increasing")
        low = m_lo * ladder
        bad = np.where(ladder >= 0, M < low * (1 - 1e-12), M > low * (1 - 1e-12))
        if bad.any():
            j = int(np.flatnonzero(bad)[0])
            fail("b_bound", {"r": r, "t": ladder[j], "M": M[j]}, "M_r(t) < m_lower t: declared m_lower too large")
        # inverse consistency and (b)
        try:
            u = pm.invert(M)
            back = pm.eval(u)
        except BracketError as exc:
            fail("b_bound", {"r": r}, str(exc))
            fail("b_lipschitz", {"r": r}, str(exc))
            continue
        except PrimitiveError as exc:
            fail("inverse_consistency", {"r": r}, str(exc))
            continue
        err = np.abs(back - M) / np.maximum(1.0, np.abs(M))
        worst_inv = max(worst_inv, float(err.max()))
        if err.max() > 10 * tol:
            j = int(np.argmax(err))
            fail("inverse_consistency", {"r": r, "s": M[j], "error": err[j]}, "M_r(M_r^-1(s)) != s")
        if np.any(np.abs(u) > np.abs(M) / m_lo * (1 + 1e-12)):
            j = int(np.flatnonzero(np.abs(u) > np.abs(M) / m_lo * (1 + 1e-12))[0])
            fail("b_bound", {"r": r, "s": M[j], "t": u[j]}, "|M_r^-1(s)| > |s| / m_lower")
        half = u.size // 2
        for a, b in ((np.arange(u.size - 1), np.arange(1, u.size)), (np.arange(half), np.arange(half, 2 * half))):
            lhs = np.abs(u[b] - u[a])
            rhs = np.abs(M[b] - M[a]) / m_lo + slack
            if np.any(lhs > rhs):
                j = int(np.flatnonzero(lhs > rhs)[0])
                fail("b_lipschitz", {"r": r, "s1": M[a[j]], "s2": M[b[j]], "excess": lhs[j] - rhs[j]},
                     "inverse not Lipschitz with constant 1/m_lower")
        # (d): ratio nonincreasing in |s| on each half-line
        for side in (M > 0, M < 0):
            s_side, u_side = M[side], u[side]
            order = np.argsort(np.abs(s_side))
            q = u_side[order] / s_side[order]
            bad = np.diff(q) > 10 * tol
            if bad.any():
                j = int(np.flatnonzero(bad)[0])
                fail("d_ratio", {"r": r, "s1": s_side[order][j], "s2": s_side[order][j + 1]},
                     "M_r^-1(s)/s increases with |s|")

    # (c): joint continuity along halving perturbations
    n_c = max(8, min(64, budget // 256))
    base = halton(n_c, 2, skip=19)
    n_c_samples = 0
    worst_dec = 0.0
    for k in range(n_c):
        r0 = float(0.5 * r_max * base[k, 1])
        t0 = float(0.5 * t_max * (2 * base[k, 0] - 1))
        dr, dt = 0.25 * r_max, 0.25 * t_max
        try:
            pm0 = cm.primitive(r0, tol)
            s0 = pm0.eval(t0)
            u0 = pm0.invert(s0)
            ds = abs(pm0.eval(t0 + dt) - s0)
            d = []
            for j in range(17):
                h = 2.0**-j
                d.append(abs(cm.primitive(r0 + h * dr, tol).invert(s0 + h * ds) - u0))
        except PrimitiveError as exc:
            fail("c_continuity", {"r": r0, "t": t0}, f"inversion failed: {exc}")
            continue
        n_c_samples += len(d)
        floor = 20 * tol * max(1.0, abs(u0))
        # the tail of the halving sequence must contract; the head may be nonlinear
        dec = d[-1] / d[-9] if d[-9] > 0 else 0.0
        worst_dec = max(worst_dec, dec if d[-1] > floor else 0.0)
        if d[-1] > max(d[-9] / 16.0, floor):
            fail("c_continuity", {"r": r0, "s": s0, "d8": d[-9], "d16": d[-1]}, "no Cauchy decrement")

    details = {
        "inverse_consistency": f"max relative error {worst_inv!r}",
        "c_continuity": f"worst tail decrement d16/d8 = {worst_dec!r}",
    }
    for key in ("a", "inverse_consistency", "b_bound", "b_lipschitz", "c_continuity", "d_ratio"):
        samples = n_c_samples if key == "c_continuity" else n
        if key in found:
            w, detail = found[key]
            report.add(Verdict(key, FAIL, samples, w, detail))
        else:
            report.add(Verdict(key, PASS, samples, detail=details.get(key, "")))
    return report


def require(report, names, exc=ModelError):
    bad = report.failures(names)
    if bad:
        v = bad[0]
        raise exc(f"hypothesis {v.name} failed: {v.detail} (witness {v.to_dict().get('witness')})")
