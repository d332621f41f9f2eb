"""The nonlocal diffusion coefficient m(t, r)."""

from __future__ import annotations

import math
import threading

from .. import expr
from ..errors import ModelError

__all__ = ["CoefficientModel", "FAMILIES"]

M_VARS = ("t", "r")

# name -> (m expression, closed-form primitive or None); {p} is substituted
FAMILIES = {
    "poly": ("t^2*(r^{p}+1)+1", "(r^{p}+1)*t^3/3+t"),
    "exp": ("t^2*(exp(t^2*exp(r))+1)+1", None),
}

INFINITY_PROBE = (1e2, 1e4, 1e6)


class CoefficientModel:
    """m(t, r) with a declared lower bound ``m_lower`` (audited, never trusted).

    When ``m`` does not involve ``t`` the primitive is ``m(r) * t`` and is used in
    closed form automatically; otherwise pass ``primitive`` to supply one.
    """

    def __init__(self, m, m_lower, primitive=None, name=None):
        self.source = m if isinstance(m, str) else expr.pretty(m)
        self.node = expr.parse(m, M_VARS) if isinstance(m, str) else m
        if not m_lower > 0:
            raise ModelError(f"m_lower must be positive, got {m_lower!r}")
        self.m_lower = float(m_lower)
        self.name = name or self.source
        self.program = expr.compile_program(self.node, M_VARS)
        if primitive is not None:
            self.primitive_node = expr.parse(primitive, M_VARS) if isinstance(primitive, str) else primitive
        elif "t" not in expr.free_variables(self.node):
            self.primitive_node = expr.Node("mul", None, (self.node, expr.Node("var", "t")))
        else:
            self.primitive_node = None
        self._maps = {}
        self._lock = threading.Lock()

    @classmethod
    def family(cls, name, p=1.0, m_lower=1.0, closed_form=False):
        try:
            m_src, prim_src = FAMILIES[name]
        except KeyError:
            raise ModelError(f"unknown coefficient family {name!r}; known: {', '.join(FAMILIES)}") from None
        p_txt = repr(float(p))
        m_src = m_src.replace("{p}", p_txt)
        prim = prim_src.replace("{p}", p_txt) if (closed_form and prim_src) else None
        label = f"{name}(p={p_txt})" if "{p}" in FAMILIES[name][0] else name
        return cls(m_src, m_lower, primitive=prim, name=label)

    @property
    def has_closed_primitive(self):
        return self.primitive_node is not None

    @property
    def depends_on_t(self):
        return "t" in expr.free_variables(self.node)

    def __call__(self, t, r):
        return expr.evaluate_array(self.node, {"t": t, "r": r})

    def at_zero(self, r):
        return float(self(0.0, r))

    def at_infinity(self, r):
        """Probe m(inf, r) = lim m(s, r); returns ``math.inf`` when classified divergent."""
        vals = []
        for s in INFINITY_PROBE:
            try:
                vals.append(float(self(s, r)))
            except (expr.ExprNonFiniteError, expr.ExprDomainError):
                return math.inf
        if vals[-1] > 10.0 * vals[-2]:
            return math.inf
        return vals[-1]

    def primitive(self, r, tol=1e-10):
        """Shared :class:`PrimitiveMap` for this ``r`` (one knot cache per (r, tol))."""
        from .primitive import PrimitiveMap

        key = (float(r), float(tol))
        with self._lock:
            pm = self._maps.get(key)
            if pm is None:
                if len(self._maps) > 256:
                    self._maps.clear()
                pm = self._maps[key] = PrimitiveMap(self, r, tol)
        return pm

    def to_dict(self):
        return {
            "m": self.source,
            "m_lower": self.m_lower,
            "closed_primitive": expr.pretty(self.primitive_node) if self.primitive_node is not None else None,
        }

    def __repr__(self):
        return f"CoefficientModel({self.source!r}, m_lower={self.m_lower})"

