"""Pure-Python twin of ``_kernels.pyx``.

Same algorithms and the same floating-point operation order; used when the
compiled extension is unavailable or ``KIRCHHOFF_PURE=1`` is set.
"""

import math

import numpy as np

BACKEND = "python"

ST_OK = 0
ST_NONFINITE = 1
ST_BRACKET = 2
ST_NOCONV = 3
MAX_DEPTH = 50
MAX_NEWTON = 200


def eval_program(prog, env):
    return prog.fn(*env)


class _Ctx:
    __slots__ = ("fn", "r", "status", "bad_t")

    def __init__(self, prog, r):
        self.fn = prog.fn
        self.r = r
        self.status = ST_OK
        self.bad_t = 0.0

    def m(self, t):
        v = self.fn(t, self.r)
        if not math.isfinite(v):
            if self.status == ST_OK:
                self.status = ST_NONFINITE
                self.bad_t = t
            return 0.0
        return v


def _asr(c, a, fa, b, fb, m, fm, whole, eps, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = c.m(lm)
    frm = c.m(rm)
    left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
    right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * eps or c.status != ST_OK:
        return left + right + delta / 15.0
    return _asr(c, a, fa, m, fm, lm, flm, left, 0.5 * eps, depth - 1) + _asr(
        c, m, fm, b, fb, rm, frm, right, 0.5 * eps, depth - 1
    )


def _simpson(c, a, b, tol):
    if a == b:
        return 0.0
    fa = c.m(a)
    fb = c.m(b)
    m = 0.5 * (a + b)
    fm = c.m(m)
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    scale = max(abs(whole), 1.0)
    return _asr(c, a, fa, b, fb, m, fm, whole, tol * scale, MAX_DEPTH)


def simpson(prog, r, a, b, tol):
    c = _Ctx(prog, float(r))
    v = _simpson(c, float(a), float(b), tol)
    return v, c.status, c.bad_t


def _find_segment(kt, at):
    lo, hi = 0, len(kt) - 1
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if abs(kt[mid]) <= at:
            lo = mid
        else:
            hi = mid - 1
    return lo


def primitive_many(prog, r, t, pos_t, pos_m, neg_t, neg_m, tol):
    c = _Ctx(prog, float(r))
    out = np.empty(len(t))
    pos_t, pos_m, neg_t, neg_m = (list(map(float, a)) for a in (pos_t, pos_m, neg_t, neg_m))
    for i, ti in enumerate(map(float, t)):
        if ti >= 0.0:
            k = _find_segment(pos_t, ti)
            out[i] = pos_m[k] + _simpson(c, pos_t[k], ti, tol)
        else:
            k = _find_segment(neg_t, -ti)
            out[i] = neg_m[k] + _simpson(c, neg_t[k], ti, tol)
        if c.status != ST_OK:
            break
    return out, c.status, c.bad_t


def _invert_one(c, s, kt, km, tol, ftol_rel):
    sa = abs(s)
    if sa == 0.0:
        return ST_OK, 0.0
    if abs(km[-1]) < sa:
        return ST_BRACKET, 0.0
    lo_k, hi_k = 0, len(kt) - 1
    while lo_k < hi_k:
        mid = (lo_k + hi_k + 1) // 2
        if abs(km[mid]) <= sa:
            lo_k = mid
        else:
            hi_k = mid - 1
    k = lo_k
    a, ma = kt[k], km[k]
    if ma == s:
        return ST_OK, a
    b, mb = kt[k + 1], km[k + 1]
    lo, hi = (a, b) if a < b else (b, a)
    ftol = ftol_rel * (sa if sa > 1.0 else 1.0)
    t = a + (s - ma) / (mb - ma) * (b - a)
    best_t, best_f = t, math.inf
    if not (lo < t < hi):
        t = 0.5 * (lo + hi)
    for _ in range(MAX_NEWTON):
        f = ma + _simpson(c, a, t, tol) - s
        mt = c.m(t)
        if c.status != ST_OK:
            return c.status, t
        if abs(f) < best_f:
            best_f = abs(f)
            best_t = t
        if abs(f) <= ftol:
            return ST_OK, t
        if f > 0.0:
            hi = t
        else:
            lo = t
        tn = t - f / mt
        if not (lo < tn < hi):
            tn = 0.5 * (lo + hi)
        if tn == t or not (hi > lo) or tn == lo or tn == hi:
            break
        t = tn
    if best_f <= tol * (sa if sa > 1.0 else 1.0):
        return ST_OK, best_t
    return ST_NOCONV, best_t


def invert_many(prog, r, s, pos_t, pos_m, neg_t, neg_m, tol, ftol_rel):
    c = _Ctx(prog, float(r))
    out = np.empty(len(s))
    pos = (list(map(float, pos_t)), list(map(float, pos_m)))
    neg = (list(map(float, neg_t)), list(map(float, neg_m)))
    for i, si in enumerate(map(float, s)):
        kt, km = pos if si >= 0.0 else neg
        st, out[i] = _invert_one(c, si, kt, km, tol, ftol_rel)
        if st != ST_OK:
            return out, st, i, c.bad_t
    return out, ST_OK, -1, c.bad_t


def cg(indptr, indices, data, b, x0, tol, maxit, callback=None):
    """Plain conjugate gradients; same contract as the compiled version."""
    from scipy.sparse import csr_matrix

    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    A = csr_matrix((data, indices, indptr), shape=(n, n))
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float, copy=True)
    bnorm = math.sqrt(float(b @ b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0, 0
    thresh = tol * bnorm
    k = 0
    while k < maxit:
        r = b - A @ x
        p = r.copy()
        rs = float(r @ r)
        if math.sqrt(rs) <= thresh:
            break
        while k < maxit:
            ap = A @ p
            pap = float(p @ ap)
            if not pap > 0.0:
                return x, k, math.sqrt(rs) / bnorm, 4
            alpha = rs / pap
            x += alpha * p
            r -= alpha * ap
            rs_new = float(r @ r)
            k += 1
            if callback is not None:
                callback(k, x.copy())
            if math.sqrt(rs_new) <= thresh:
                break
            p = r + (rs_new / rs) * p
            rs = rs_new
    res = math.sqrt(float((b - A @ x) @ (b - A @ x)))
    return x, k, res / bnorm, 0 if res <= thresh else 3
