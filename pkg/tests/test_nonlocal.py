import math

import numpy as np
import pytest
from scipy.optimize import brentq

from kirchhoff.errors import TrivialProblemError
from kirchhoff.mesh import Mesh
from kirchhoff.model import CoefficientModel, Nonlinearity
from kirchhoff.nonlocal_solver import (
    Problem,
    check_contraction,
    check_f5,
    continuity_probe_S,
    evaluate_S,
    find_fixed_point,
    nonlocal_residual,
    sublinear_condition_holds,
    trace_S,
)

SOURCE = Nonlinearity("pi^2*sin(pi*x)", "source")


def problem(m="1", m_lower=1.0, nl=SOURCE, n=127):
    return Problem(Mesh(nl.dim, n=n), CoefficientModel(m, m_lower), nl)


def test_linear_v_is_shared_across_r():
    p = problem("t^2+1+r")
    a, b = evaluate_S(p, 0.0), evaluate_S(p, 3.0)
    assert a.v is b.v
    assert b.S < a.S


@pytest.mark.parametrize("m", ["1", "1+r", "t^2+1+r", "t^2*(r+1)+1"])
def test_bound_chain(m):
    p = problem(m)
    for r in (0.0, 0.5, 2.0, 7.0):
        assert evaluate_S(p, r).chain_ok(p.m_lower)


def test_identity_fixed_point():
    tr = find_fixed_point(problem(n=255))
    assert tr.r_star == pytest.approx(math.pi**2 / 2, rel=1e-4)
    assert tr.residual <= 1e-8
    assert tr.energy_check <= 1e-8
    assert tr.nonlocal_residual <= 1e-8


def test_cubic_oracle():
    root = brentq(lambda r: r * (1 + r) ** 2 - math.pi**2 / 2, 0, 5, xtol=1e-15)
    # discrete analogue: S(0) from the same grid, then r (1 + r)^2 = S(0)
    p = problem("1+r", n=255)
    s0 = evaluate_S(p, 0.0).S
    discrete = brentq(lambda r: r * (1 + r) ** 2 - s0, 0, 5, xtol=1e-15)
    tr = find_fixed_point(p)
    assert tr.r_star == pytest.approx(discrete, rel=1e-8)
    assert tr.r_star == pytest.approx(root, rel=1e-4)


def test_bisection_brackets_straddle_root():
    p = problem("t^2+1+r")
    tr = find_fixed_point(p)
    for a, b in tr.brackets[1:]:
        assert evaluate_S(p, a).g > 0 > evaluate_S(p, b).g or abs(evaluate_S(p, b).g) <= 1e-8
    assert tr.nonlocal_residual <= 1e-8


def test_trivial_problem():
    with pytest.raises(TrivialProblemError):
        find_fixed_point(problem(nl=Nonlinearity("0", "source")))


def test_trace_S_crossings_and_order_independence():
    p = problem("1+r", n=63)
    serial, cs = trace_S(p, 4.0, 9)
    parallel, cp = trace_S(p, 4.0, 9, workers=4)
    assert [e.S for e in serial] == [e.S for e in parallel]
    assert len(cs) == 1 and cs == cp
    assert np.all(np.diff([e.S for e in serial]) < 0)
    single, _ = trace_S(p, 0.0, 5)
    assert len(single) == 1 and single[0].S > 0


class TestSublinear:
    def test_condition_passes(self):
        nl = Nonlinearity("20*t/(1+t)", "sublinear", c=5.0)
        rep = check_f5(problem("t^2+1", nl=nl, n=63))
        assert rep["condicaoBO"].passed
        assert rep["condicaoBO"].witness["lambda_left"] < 0 < rep["condicaoBO"].witness["lambda_right"]
        assert sublinear_condition_holds(rep)

    def test_condition_fails(self):
        nl = Nonlinearity("5*t/(1+t)", "sublinear", c=5.0)
        rep = check_f5(problem("t^2+1", nl=nl, n=63))
        assert not rep["condicaoBO"].passed
        assert not sublinear_condition_holds(rep)

    def test_infinite_slope_passes_left_symbolically(self):
        nl = Nonlinearity("sqrt(t)", "sublinear", c=1.0)
        rep = check_f5(problem("t^2+1", nl=nl, n=31))
        assert rep["condicaoBO"].passed
        assert rep.to_dict()["verdicts"]["condicaoBO"]["witness"]["lambda_left"] == "-inf"

    def test_fixed_point(self):
        nl = Nonlinearity("20*t/(1+t)", "sublinear", c=5.0)
        p = problem("t^2+1", nl=nl, n=127)
        tr = find_fixed_point(p)
        assert tr.r_star > 0 and np.all(tr.u.values >= 0)
        assert tr.nonlocal_residual <= 1e-8


class TestContraction:
    nl = Nonlinearity("1+sin(t)", "lipschitz", theta=1.0)

    def test_pass(self):
        assert check_contraction(problem(nl=self.nl, n=63)).ok()

    def test_theta_too_large(self):
        nl = Nonlinearity("1+sin(t)", "lipschitz", theta=10.0)
        rep = check_contraction(problem(nl=nl, n=255))
        assert not rep["theta"].passed and rep["theta"].witness["margin"] < 0

    def test_delta_one_tight(self):
        nl = Nonlinearity("1+sin(t)", "lipschitz", theta=1.0, delta=1.0, nu=9.8)
        rep = check_contraction(problem(nl=nl, n=255))
        assert rep["delta_one"].passed

    def test_fixed_point(self):
        tr = find_fixed_point(problem(nl=self.nl, n=127))
        assert tr.residual <= 1e-8 and tr.nonlocal_residual <= 1e-8


def test_nonlocal_residual_detects_wrong_r():
    p = problem("t^2+1+r")
    tr = find_fixed_point(p)
    assert nonlocal_residual(p, tr.u, tr.r_star + 0.1) > 1e-3


class TestContinuityProbe:
    def test_constant_S(self):
        rep = continuity_probe_S(problem(n=31), 1.0, levels=4)
        assert rep["S_continuity"].passed and max(rep.oscillation) == 0

    def test_smooth_model(self):
        assert continuity_probe_S(problem("t^2+1+r", n=31), 1.0, levels=8)["S_continuity"].passed

    def test_jump_in_r(self):
        p = problem("2+atan(1e15*(r-1))", m_lower=0.4, n=31)
        assert not continuity_probe_S(p, 1.0, levels=8)["S_continuity"].passed
