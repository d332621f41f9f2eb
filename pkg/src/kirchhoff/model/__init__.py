"""Coefficient m(t, r), primitive M_r, nonlinearities and hypothesis verifiers."""

from .coefficient import FAMILIES, CoefficientModel
from .hypotheses import Report, Verdict, check_hypotheses, verify_lemma
from .nonlinearity import REGIMES, Nonlinearity, ReducedNonlinearity, alpha_limits, ratio_limits
from .primitive import PrimitiveMap

__all__ = [
    "CoefficientModel",
    "FAMILIES",
    "PrimitiveMap",
    "Nonlinearity",
    "ReducedNonlinearity",
    "REGIMES",
    "Report",
    "Verdict",
    "alpha_limits",
    "ratio_limits",
    "check_hypotheses",
    "verify_lemma",
    "primitive_eval",
    "primitive_invert",
    "mean_value_point",
]


def primitive_eval(pm, t):
    return pm.eval(t)


def primitive_invert(pm, s):
    return pm.invert(s)


def mean_value_point(pm, s):
    return pm.mean_value_point(s)
