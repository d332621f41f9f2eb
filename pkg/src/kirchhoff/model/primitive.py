"""Primitive M_r(t) = int_0^t m(s, r) ds, its inverse, and the mean-value point t_{r,s}.

Quadrature runs on a fixed knot grid: M_r is cached at t = +-k*0.25 (k <= 32)
and at +-8*2^j beyond, and M_r(t) = M_r(knot) + int_knot^t m with the knot the
nearest grid point toward zero.  The cache content depends only on the knot
index, so cached and cold evaluations perform identical arithmetic and
concurrent callers see the values a serial run would.
"""

from __future__ import annotations

import threading

import numpy as np

from .. import kernels
from ..errors import BracketError, ModelError, PrimitiveError

__all__ = ["PrimitiveMap", "knot_position"]

KNOT_STEP = 0.25
KNOT_LINEAR = 32
KNOT_MAX = KNOT_LINEAR + 120

# root-finding target as a fraction of the quadrature tolerance
ROOT_FRACTION = 1e-3


def knot_position(k):
    if k <= KNOT_LINEAR:
        return k * KNOT_STEP
    return KNOT_LINEAR * KNOT_STEP * 2.0 ** (k - KNOT_LINEAR)


class _Side:
    __slots__ = ("sign", "t", "m")

    def __init__(self, sign):
        self.sign = sign
        self.t = np.zeros(1)
        self.m = np.zeros(1)


class PrimitiveMap:
    def __init__(self, model, r, tol=1e-10, backend=None):
        if not r >= 0:
            raise ModelError(f"r must be nonnegative, got {r!r}")
        self.model = model
        self.r = float(r)
        self.tol = float(tol)
        self.kernels = kernels.get(backend)
        self._sides = {1: _Side(1.0), -1: _Side(-1.0)}
        self._lock = threading.Lock()

    @property
    def m_lower(self):
        return self.model.m_lower

    def m(self, t):
        return self.model(t, self.r)

    # ----------------------------------------------------------- knots

    def knots(self, sign=1):
        side = self._sides[sign]
        return side.t.copy(), side.m.copy()

    def _extend(self, side, k_new):
        """Append knots up to index ``k_new``; caller holds the lock."""
        ts, ms = list(side.t), list(side.m)
        prog = self.model.program
        for k in range(len(ts), k_new + 1):
            if k > KNOT_MAX:
                raise PrimitiveError(f"|t| beyond the knot grid (r={self.r})")
            a, b = ts[-1], side.sign * knot_position(k)
            seg, status, bad = self.kernels.simpson(prog, self.r, a, b, self.tol)
            if status:
                raise PrimitiveError(f"non-finite m(t, r) at t={float(bad)!r}, r={self.r!r}")
            value = ms[-1] + seg
            if not side.sign * (value - ms[-1]) > 0:
                raise PrimitiveError(
                    f"primitive not strictly increasing on [{min(a, b)!r}, {max(a, b)!r}] at r={self.r!r}"
                )
            ts.append(b)
            ms.append(value)
        side.t, side.m = np.array(ts), np.array(ms)

    def _cover_t(self, tmax, sign):
        side = self._sides[sign]
        if abs(side.t[-1]) >= tmax:
            return side
        with self._lock:
            k = len(side.t)
            while knot_position(k - 1) < tmax:
                k += 1
                if k > KNOT_MAX + 1:
                    raise PrimitiveError(f"|t|={tmax!r} beyond the knot grid")
            self._extend(side, k - 1)
        return side

    def _cover_s(self, smax, sign):
        side = self._sides[sign]
        if abs(side.m[-1]) >= smax:
            return side
        with self._lock:
            while abs(side.m[-1]) < smax:
                if abs(side.t[-1]) >= smax / self.m_lower:
                    raise BracketError(
                        f"M_r(t) < m_lower*t at t={float(side.t[-1])!r}, r={self.r!r}: "
                        f"no root of M_r(t)={sign * smax!r} in the a-priori bracket (declared m_lower too large?)"
                    )
                self._extend(side, len(side.t))
        return side

    # ------------------------------------------------------ evaluation

    def eval(self, t):
        """M_r(t); scalar in, scalar out, arrays keep their shape."""
        t_arr = np.asarray(t, dtype=float)
        flat = np.ascontiguousarray(t_arr.ravel())
        if not np.all(np.isfinite(flat)):
            raise PrimitiveError("M_r evaluated at a non-finite point")
        if self.model.has_closed_primitive:
            out = self._closed(flat)
        else:
            pos = self._cover_t(float(flat.max(initial=0.0)), 1)
            neg = self._cover_t(float(-flat.min(initial=0.0)), -1)
            out, status, bad = self.kernels.primitive_many(
                self.model.program, self.r, flat, pos.t, pos.m, neg.t, neg.m, self.tol
            )
            if status:
                raise PrimitiveError(f"non-finite m(t, r) at t={float(bad)!r}, r={self.r!r}")
        return float(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)

    def _closed(self, t):
        from .. import expr

        return expr.evaluate_array(self.model.primitive_node, {"t": t, "r": self.r})

    def invert(self, s):
        """M_r^{-1}(s), found inside the bracket [0, s/m_lower] (mirrored for s < 0)."""
        s_arr = np.asarray(s, dtype=float)
        flat = np.ascontiguousarray(s_arr.ravel())
        if not np.all(np.isfinite(flat)):
            raise PrimitiveError("M_r^{-1} evaluated at a non-finite point")
        if self.model.has_closed_primitive:
            out = self._invert_closed(flat)
        else:
            pos = self._cover_s(float(flat.max(initial=0.0)), 1)
            neg = self._cover_s(float(-flat.min(initial=0.0)), -1)
            out, status, idx, bad = self.kernels.invert_many(
                self.model.program, self.r, flat, pos.t, pos.m, neg.t, neg.m, self.tol, ROOT_FRACTION * self.tol
            )
            if status == kernels.python.ST_NONFINITE:
                raise PrimitiveError(f"non-finite m(t, r) at t={float(bad)!r}, r={self.r!r}")
            if status == kernels.python.ST_BRACKET:
                raise BracketError(f"s={float(flat[idx])!r} outside the cached primitive range at r={self.r!r}")
            if status:
                raise PrimitiveError(f"root of M_r(t)={float(flat[idx])!r} not resolved to tolerance at r={self.r!r}")
        bound = np.abs(flat) / self.m_lower
        over = np.abs(out) > bound * (1.0 + 1e-12) + 1e-300
        if over.any():
            i = int(np.flatnonzero(over)[0])
            raise BracketError(
                f"|M_r^-1({float(flat[i])!r})|={float(abs(out[i]))!r} exceeds |s|/m_lower={float(bound[i])!r} at r={self.r!r}"
            )
        return float(out[0]) if s_arr.ndim == 0 else out.reshape(s_arr.shape)

    def _invert_closed(self, s):
        m_lo = self.m_lower
        lo = np.where(s >= 0, 0.0, s / m_lo)
        hi = np.where(s >= 0, s / m_lo, 0.0)
        f_lo, f_hi = self._closed(lo) - s, self._closed(hi) - s
        bad = (f_lo > 0) | (f_hi < 0)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise BracketError(f"no root of M_r(t)={s[i]!r} in [{lo[i]!r}, {hi[i]!r}] at r={self.r!r}")
        ftol = ROOT_FRACTION * self.tol * np.maximum(1.0, np.abs(s))
        t = s / self.model(0.0, self.r)
        t = np.where((t >= lo) & (t <= hi), t, 0.5 * (lo + hi))
        done = s == 0
        t[done] = 0.0
        best_t, best_f = t.copy(), np.full(s.shape, np.inf)
        for _ in range(200):
            f = self._closed(t) - s
            better = np.abs(f) < best_f
            best_t[better], best_f[better] = t[better], np.abs(f[better])
            done |= np.abs(f) <= ftol
            if done.all():
                break
            lo = np.where(f < 0, t, lo)
            hi = np.where(f > 0, t, hi)
            mt = self.m(t)
            tn = t - f / mt
            tn = np.where((tn >= lo) & (tn <= hi), tn, 0.5 * (lo + hi))
            stuck = (tn == t) | ~(hi > lo)
            done |= stuck
            t = np.where(done, t, tn)
        t = np.where(s == 0, 0.0, best_t)
        if (best_f > self.tol * np.maximum(1.0, np.abs(s))).any():
            raise PrimitiveError(f"closed-form primitive inversion did not converge at r={self.r!r}")
        return t

    # --------------------------------------------- mean-value point

    def mean_value_point(self, s):
        """The unique t_{r,s} strictly between 0 and M_r^{-1}(s) with s = M_r(s / m(t_{r,s}, r)).

        Equivalently m(t_{r,s}, r) = s / M_r^{-1}(s); found by bisection using the
        monotonicity of t -> m(t, r) on each half-line.
        """
        s = float(s)
        if s == 0.0:
            raise ModelError("mean-value point undefined at s = 0")
        u = self.invert(s)
        target = s / u
        fn = self.model.program.fn
        r = self.r

        def g(t):
            return fn(t, r) - target

        # g < 0 at 0 and > 0 at u when m_r is strictly monotone on the half-line
        if not (g(0.0) < 0 < g(u)):
            raise ModelError(
                f"no mean-value point between 0 and {u!r} at r={r!r}: "
                "m_r is not strictly monotone there (m2 violated)"
            )
        ladder = np.linspace(0.0, u, 65)
        vals = np.array([fn(float(t), r) for t in ladder])
        if np.any(np.diff(vals) <= 0):
            raise ModelError(f"m_r not strictly increasing in |t| on [0, {u!r}] at r={r!r} (m2 violated)")
        a, b = 0.0, u  # g(a) < 0 < g(b), either orientation
        for _ in range(200):
            mid = 0.5 * (a + b)
            if mid == a or mid == b:
                break
            if g(mid) < 0:
                a = mid
            else:
                b = mid
        return b if abs(g(b)) < abs(g(a)) else a

    def __repr__(self):
        return f"PrimitiveMap({self.model.source!r}, r={self.r}, tol={self.tol})"

