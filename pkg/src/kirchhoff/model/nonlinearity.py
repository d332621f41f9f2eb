"""Right-hand sides f(x, t), the reduced nonlinearity h_r(x, s) = f(x, M_r^{-1}(s)),
and the limits of f(x, t)/t at zero and infinity."""

from __future__ import annotations

import math

import numpy as np

from .. import expr
from ..errors import EstimationError, ModelError

__all__ = ["Nonlinearity", "ReducedNonlinearity", "REGIMES", "ratio_limits", "alpha_limits"]

REGIMES = ("source", "growth", "sublinear", "lipschitz")

SMALL_T = tuple(10.0 ** -k for k in range(1, 7))
LARGE_T = tuple(10.0**k for k in range(1, 7))
INFINITE_RATIO = 1e8


def space_vars(dim):
    return ("x",) if dim == 1 else ("x", "y")


class Nonlinearity:
    """f(x[, y], t) tagged with the hypothesis regime it is meant to satisfy.

    In the ``sublinear`` regime f is only given on t >= 0 and is extended to
    negative t by the constant f(x, 0).
    """

    def __init__(self, f, regime, dim=1, c=None, p=None, theta=None, delta=None, nu=None, mu=None):
        if regime not in REGIMES:
            raise ModelError(f"unknown regime {regime!r}; expected one of {', '.join(REGIMES)}")
        self.dim = dim
        self.regime = regime
        self.source = f if isinstance(f, str) else expr.pretty(f)
        self.node = expr.parse(f, space_vars(dim) + ("t",)) if isinstance(f, str) else f
        if regime == "source" and "t" in expr.free_variables(self.node):
            raise ModelError("a pure-source right-hand side must not depend on t")
        self.c = c
        self.p = p
        self.theta = theta
        self.delta = delta
        self.nu = nu
        self.mu_source = mu
        self.mu_node = expr.parse(mu, space_vars(dim)) if isinstance(mu, str) else mu

    @property
    def depends_on_t(self):
        return "t" in expr.free_variables(self.node)

    def _bindings(self, coords, t=None):
        b = {"x": coords[0]}
        if self.dim == 2:
            b["y"] = coords[1]
        if t is not None:
            b["t"] = t
        return b

    def raw(self, coords, t):
        """f without the negative-t extension."""
        return expr.evaluate_array(self.node, self._bindings(coords, t))

    def __call__(self, coords, t):
        t = np.asarray(t, dtype=float)
        if self.regime == "sublinear":
            t = np.maximum(t, 0.0)
        return self.raw(coords, t)

    def mu(self, coords):
        if self.mu_node is None:
            return None
        return expr.evaluate_array(self.mu_node, self._bindings(coords))

    def to_dict(self):
        return {
            "f": self.source,
            "regime": self.regime,
            "c": self.c,
            "p": self.p,
            "theta": self.theta,
            "delta": self.delta,
            "nu": self.nu,
            "mu": self.mu_source,
        }


class ReducedNonlinearity:
    """h_r(x, s) = f(x, M_r^{-1}(s)) for one frozen r."""

    def __init__(self, nonlinearity, primitive):
        self.nonlinearity = nonlinearity
        self.primitive = primitive

    @property
    def r(self):
        return self.primitive.r

    @property
    def lipschitz_bound(self):
        theta = self.nonlinearity.theta
        return None if theta is None else theta / self.primitive.m_lower

    @property
    def growth_constant(self):
        """c_h with |h_r(x, s)| <= c_h (1 + |s|), inherited from f <= c(1 + t)."""
        c = self.nonlinearity.c
        return None if c is None else c / min(1.0, self.primitive.m_lower)

    def __call__(self, coords, s):
        return self.nonlinearity(coords, self.primitive.invert(s))


def _check_ladder(q, increasing, where):
    q = np.asarray(q)
    steps = np.diff(q, axis=0)
    slack = 1e-9 * np.maximum(1.0, np.abs(q[:-1]))
    bad = steps < -slack if increasing else steps > slack
    if bad.any():
        k, i = np.argwhere(bad)[0] if q.ndim > 1 else (int(np.flatnonzero(bad)[0]), 0)
        raise EstimationError(f"f(x,t)/t not monotone on the {where} ladder (sample {k}, node {i}); f4 likely violated")


def ratio_limits(nl, coords):
    """(alpha_0(x), alpha_inf(x)): limits of f(x, t)/t as t -> 0 and t -> inf at each point.

    Samples t = 10^-k and 10^k for k = 1..6 and extrapolates the ladder with
    Aitken's delta-squared step.  alpha_0 is +inf when the last ratio exceeds 1e8
    or when the ratio increments stop shrinking.
    """
    coords = tuple(np.atleast_1d(np.asarray(c, dtype=float)) for c in coords)
    q0 = np.array([nl.raw(coords, t) / t for t in SMALL_T])
    qi = np.array([nl.raw(coords, t) / t for t in LARGE_T])
    _check_ladder(q0, True, "t -> 0")
    _check_ladder(qi, False, "t -> inf")
    alpha0, diverging = _aitken(q0)
    alpha0 = np.where(diverging | (q0[-1] > INFINITE_RATIO), np.inf, np.maximum(alpha0, q0[-1]))
    alphainf, _ = _aitken(qi)
    alphainf = np.clip(alphainf, 0.0, np.maximum(qi[-1], 0.0))
    return alpha0, alphainf


def _aitken(q):
    """Aitken delta-squared limit of the last three ladder values; flags increments that do not shrink."""
    d1, d2 = q[-2] - q[-3], q[-1] - q[-2]
    tiny = 1e-12 * np.maximum(1.0, np.abs(q[-1]))
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.where(np.abs(d1) > tiny, d2 / d1, 0.0)
    diverging = (rho >= 1.0) & (np.abs(d2) > tiny)
    shrinking = (rho > 0.0) & (rho < 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        limit = np.where(shrinking, q[-1] + d2 * rho / (1.0 - rho), q[-1])
    return limit, diverging


def alpha_limits(nl, model, r, coords):
    """(alpha_0^r(x), alpha_inf^r(x)) = (alpha_0 / m(0, r), alpha_inf / m(inf, r)).

    alpha_inf^r is 0 whenever m(inf, r) is classified divergent.
    """
    if nl.regime != "sublinear":
        raise ModelError("alpha limits are defined for the sublinear regime only")
    alpha0, alphainf = ratio_limits(nl, coords)
    m0 = model.at_zero(r)
    minf = model.at_infinity(r)
    a0r = np.where(np.isinf(alpha0), np.inf, alpha0 / m0)
    air = np.zeros_like(alphainf) if math.isinf(minf) else alphainf / minf
    return a0r, air
