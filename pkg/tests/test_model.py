import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kirchhoff.errors import BracketError, ModelError
from kirchhoff.model import (
    CoefficientModel,
    Nonlinearity,
    PrimitiveMap,
    ReducedNonlinearity,
    alpha_limits,
    check_hypotheses,
    mean_value_point,
    primitive_eval,
    primitive_invert,
    ratio_limits,
    verify_lemma,
)

X = (np.linspace(0.1, 0.9, 5),)


def poly(p=1.0, **kw):
    return CoefficientModel.family("poly", p=p, **kw)


class TestCoefficient:
    def test_closed_primitive_for_t_free_model(self):
        cm = CoefficientModel("1+r", 1.0)
        assert cm.has_closed_primitive and not cm.depends_on_t
        assert cm.primitive(2.0).eval(1.5) == pytest.approx(4.5)

    def test_family_values(self):
        cm = poly(2.0)
        assert float(cm(1.0, 2.0)) == pytest.approx(1.0 * (4.0 + 1.0) + 1.0)
        assert cm.at_zero(3.0) == 1.0

    def test_unknown_family(self):
        with pytest.raises(ModelError):
            CoefficientModel.family("nope")

    def test_lower_bound_must_be_positive(self):
        with pytest.raises(ModelError):
            CoefficientModel("1", 0.0)

    def test_infinity_probe(self):
        assert poly().at_infinity(0.0) == math.inf
        assert CoefficientModel("2+1/(1+t^2)", 2.0).at_infinity(0.0) == pytest.approx(2.0, abs=1e-6)


class TestPrimitive:
    def test_known_values(self):
        pm = poly().primitive(0.0)
        # M_0(t) = t^3/3 + t
        assert pm.eval(1.0) == pytest.approx(4.0 / 3.0, rel=1e-12)
        assert pm.invert(4.0 / 3.0) == pytest.approx(1.0, rel=1e-10)
        assert poly().primitive(1.0).eval(2.0) == pytest.approx(22.0 / 3.0, rel=1e-12)

    def test_odd_symmetry(self):
        pm = poly().primitive(0.7)
        t = np.linspace(0.1, 4.0, 17)
        np.testing.assert_allclose(pm.eval(-t), -pm.eval(t), rtol=1e-14)

    def test_quadrature_matches_closed_form(self):
        quad = poly(2.0).primitive(1.3)
        closed = CoefficientModel.family("poly", p=2.0, closed_form=True).primitive(1.3)
        t = np.linspace(-3, 3, 41)
        np.testing.assert_allclose(quad.eval(t), closed.eval(t), rtol=1e-10, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-50, 50), st.floats(0, 3))
    def test_inverse_round_trip(self, s, r):
        pm = poly().primitive(r)
        u = pm.invert(s)
        assert pm.eval(u) == pytest.approx(s, rel=1e-9, abs=1e-9)
        assert abs(u) <= abs(s) + 1e-12  # m_lower = 1

    def test_cold_and_warm_maps_agree(self):
        cm = poly()
        s = np.linspace(-30, 30, 25)
        warm = PrimitiveMap(cm, 0.5)
        warm.invert(np.array([100.0]))
        np.testing.assert_array_equal(PrimitiveMap(cm, 0.5).invert(s), warm.invert(s))

    def test_declared_bound_too_large(self):
        pm = CoefficientModel("t^2+1", 2.0).primitive(0.0)
        with pytest.raises(BracketError):
            pm.invert(1.0)

    def test_wrappers(self):
        pm = poly().primitive(0.0)
        assert primitive_eval(pm, 1.0) == pm.eval(1.0)
        assert primitive_invert(pm, 2.0) == pm.invert(2.0)


class TestMeanValuePoint:
    def test_value(self):
        pm = CoefficientModel("t^2+1", 1.0).primitive(0.0)
        s = 4.0 / 3.0  # M^{-1}(s) = 1 and m(t) = s, so t = 1/sqrt(3)
        assert mean_value_point(pm, s) == pytest.approx(1.0 / math.sqrt(3.0), rel=1e-9)
        assert mean_value_point(pm, -s) == pytest.approx(-1.0 / math.sqrt(3.0), rel=1e-9)

    def test_zero_is_a_domain_error(self):
        pm = CoefficientModel("t^2+1", 1.0).primitive(0.0)
        with pytest.raises(ModelError):
            mean_value_point(pm, 0.0)


class TestHypotheses:
    def test_paper_family_passes(self):
        rep = check_hypotheses(poly(), budget=1024)
        assert all(rep[k].passed for k in ("m0", "m1", "m2", "m3"))

    def test_constant_in_t_fails_m2_with_witness(self):
        rep = check_hypotheses(CoefficientModel("1+r", 1.0), budget=512)
        assert not rep["m2"].passed
        assert rep["m2"].witness is not None
        assert not rep["m3"].passed

    def test_m1_violation(self):
        rep = check_hypotheses(CoefficientModel("t^2+1", 1.5), budget=512)
        assert not rep["m1"].passed

    def test_non_shrinking_oscillation_fails_m0(self):
        # varies on a scale far below the finest probe, so it looks discontinuous everywhere
        rep = check_hypotheses(CoefficientModel("2+sin(1e12*t)", 1.0), budget=512)
        assert not rep["m0"].passed

    def test_sublinear_regime(self):
        nl = Nonlinearity("20*t/(1+t)", "sublinear", c=5.0)
        rep = check_hypotheses(CoefficientModel("t^2+1", 1.0), nl, budget=1024)
        for k in ("f1", "f2", "f3", "f4", "f6", "claim"):
            assert rep[k].passed, k

    def test_sublinear_growth_bound_fails(self):
        nl = Nonlinearity("t^2", "sublinear", c=1.0)
        rep = check_hypotheses(CoefficientModel("t^2+1", 1.0), nl, budget=512)
        assert not rep["f1"].passed
        assert not rep["f4"].passed

    def test_lipschitz_regime(self):
        nl = Nonlinearity("1+sin(t)", "lipschitz", theta=1.0, delta=0.5, nu=1.0, mu="2")
        rep = check_hypotheses(CoefficientModel("1", 1.0), nl, budget=1024)
        for k in ("f7", "f8", "f9", "h_lipschitz"):
            assert rep[k].passed, k

    def test_lipschitz_secant_too_steep(self):
        nl = Nonlinearity("1+3*sin(t)", "lipschitz", theta=1.0)
        rep = check_hypotheses(CoefficientModel("1", 1.0), nl, budget=512)
        assert not rep["f9"].passed
        assert rep["f8"].verdict == "inconclusive"

    def test_source_regime(self):
        rep = check_hypotheses(CoefficientModel("1", 1.0), Nonlinearity("pi^2*sin(pi*x)", "source"), budget=256)
        assert rep["source"].passed and rep["nontrivial"].passed
        rep = check_hypotheses(CoefficientModel("1", 1.0), Nonlinearity("0", "source"), budget=256)
        assert not rep["nontrivial"].passed

    def test_growth_regime(self):
        nl = Nonlinearity("1+t^3", "growth", c=2.0, p=3.0)
        rep = check_hypotheses(poly(), nl, budget=512)
        assert rep["C"].passed and rep["C_exponent"].passed

    def test_report_serializes(self):
        d = check_hypotheses(poly(), budget=128).to_dict()
        assert d["verdicts"]["m1"]["verdict"] == "pass"


class TestLemma:
    @pytest.mark.parametrize("cm", [poly(1.0), CoefficientModel("1", 1.0)], ids=["poly", "identity"])
    def test_passes(self, cm):
        rep = verify_lemma(cm, budget=2000)
        assert rep.ok(), [v.to_dict() for v in rep.failures()]

    def test_declared_bound_too_large_fails_b(self):
        rep = verify_lemma(CoefficientModel("t^2+1", 2.0), budget=1000)
        assert not rep["b_bound"].passed
        assert rep["b_bound"].witness


class TestNonlinearity:
    def test_sublinear_extension(self):
        nl = Nonlinearity("1+t", "sublinear", c=1.0)
        np.testing.assert_allclose(nl(X, -3.0), 1.0)

    def test_source_must_not_use_t(self):
        with pytest.raises(ModelError):
            Nonlinearity("t", "source")

    def test_ratio_limits(self):
        a0, ainf = ratio_limits(Nonlinearity("20*t/(1+t)", "sublinear", c=5.0), X)
        np.testing.assert_allclose(a0, 20.0, rtol=1e-4)
        np.testing.assert_allclose(ainf, 0.0, atol=1e-4)

    def test_sqrt_has_infinite_slope_at_zero(self):
        a0, ainf = ratio_limits(Nonlinearity("sqrt(t)", "sublinear", c=1.0), X)
        assert np.all(np.isinf(a0))
        np.testing.assert_allclose(ainf, 0.0, atol=1e-2)

    def test_alpha_limits_divide_by_m(self):
        nl = Nonlinearity("20*t/(1+t)", "sublinear", c=5.0)
        a0, ainf = alpha_limits(nl, CoefficientModel("2+r", 2.0), 1.0, X)
        np.testing.assert_allclose(a0, 20.0 / 3.0, rtol=1e-4)
        a0, ainf = alpha_limits(Nonlinearity("3*t+1", "sublinear", c=4.0), poly(), 0.0, X)
        np.testing.assert_allclose(ainf, 0.0)

    def test_reduced_constants(self):
        nl = Nonlinearity("1+sin(t)", "lipschitz", theta=2.0)
        hr = ReducedNonlinearity(nl, CoefficientModel("t^2+4", 4.0).primitive(0.0))
        assert hr.lipschitz_bound == 0.5
        nl = Nonlinearity("t/(1+t)", "sublinear", c=1.0)
        assert ReducedNonlinearity(nl, CoefficientModel("t^2+0.5", 0.5).primitive(0.0)).growth_constant == 2.0
