import math

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

from kirchhoff import expr, kernels


@pytest.mark.parametrize(
    "src, value",
    [
        ("1+2*3", 7.0),
        ("2^3^2", 512.0),
        ("-2^2", 4.0),
        ("(1+2)/4", 0.75),
        ("pi", math.pi),
        ("e", math.e),
        ("pow(2, 10)", 1024.0),
        ("min(3, -1) + max(2, 5)", 4.0),
        ("atan(1)*4", math.pi),
        ("sqrt(abs(-16))", 4.0),
        ("1e-3*1E3", 1.0),
    ],
)
def test_scalar_values(src, value):
    assert expr.evaluate(expr.parse(src), {}) == pytest.approx(value, rel=1e-15)


def test_variables_and_broadcast():
    node = expr.parse("t^2*(r+1)+1", ("t", "r"))
    out = expr.evaluate_array(node, {"t": np.array([0.0, 1.0, 2.0])[:, None], "r": np.array([0.0, 1.0])})
    assert out.shape == (3, 2)
    np.testing.assert_allclose(out, [[1, 1], [2, 3], [5, 9]])
    assert expr.free_variables(node) == {"t", "r"}


@pytest.mark.parametrize(
    "src, exc",
    [
        ("1+", expr.ExprSyntaxError),
        ("(1", expr.ExprSyntaxError),
        ("1 2", expr.ExprSyntaxError),
        ("foo(1)", expr.ExprNameError),
        ("x", expr.ExprNameError),
        ("sin(1, 2)", expr.ExprArityError),
        ("pow(2)", expr.ExprArityError),
        ("", expr.ExprSyntaxError),
    ],
)
def test_parse_errors(src, exc):
    with pytest.raises(exc):
        expr.parse(src, ("t",))


def test_syntax_error_reports_column():
    with pytest.raises(expr.ExprSyntaxError) as info:
        expr.parse("1 + * 2")
    assert info.value.column == 5


@pytest.mark.parametrize("src", ["log(t)", "sqrt(t)", "1/t"])
def test_domain_errors(src):
    node = expr.parse(src, ("t",))
    with pytest.raises(expr.ExprDomainError):
        expr.evaluate(node, {"t": -1.0 if src != "1/t" else 0.0})


def test_overflow_is_an_error():
    with pytest.raises(expr.ExprNonFiniteError):
        expr.evaluate(expr.parse("exp(1000)"), {})


def test_unbound_variable():
    with pytest.raises(expr.ExprNameError):
        expr.evaluate(expr.parse("t+r", ("t", "r")), {"t": 1.0})


# random well-formed expressions over t and r
_leaf = st.one_of(
    st.sampled_from(["t", "r", "pi", "e"]),
    st.floats(0, 100, allow_nan=False).map(lambda v: repr(float(v))),
)


def _grow(children):
    return st.one_of(
        st.tuples(children, st.sampled_from("+-*/"), children).map(lambda a: f"({a[0]}{a[1]}{a[2]})"),
        st.tuples(st.sampled_from(["sin", "cos", "atan", "abs"]), children).map(lambda a: f"{a[0]}({a[1]})"),
        st.tuples(st.sampled_from(["min", "max"]), children, children).map(lambda a: f"{a[0]}({a[1]}, {a[2]})"),
        children.map(lambda a: f"-{a}"),
        children.map(lambda a: f"({a})^2"),
    )


expressions = st.recursive(_leaf, _grow, max_leaves=12)


def _value(node, env):
    try:
        return expr.evaluate(node, env)
    except expr.ExprError as exc:
        return type(exc)


@settings(max_examples=300, deadline=None)
@given(expressions, st.floats(-3, 3), st.floats(0, 3))
def test_pretty_round_trip(src, t, r):
    node = expr.parse(src, ("t", "r"))
    again = expr.parse(expr.pretty(node), ("t", "r"))
    assert expr.pretty(again) == expr.pretty(node)
    a, b = _value(node, {"t": t, "r": r}), _value(again, {"t": t, "r": r})
    assert a == b or (isinstance(a, float) and math.isnan(a) and math.isnan(b))


@settings(max_examples=200, deadline=None)
@given(expressions, st.floats(-3, 3), st.floats(0, 3))
@example("--min(t, (t/t))", 0.0, 0.0)
def test_compiled_program_matches_tree(src, t, r):
    node = expr.parse(src, ("t", "r"))
    want = _value(node, {"t": t, "r": r})
    prog = expr.compile_program(node, ("t", "r"))
    for name in kernels.available():
        got = kernels.get(name).eval_program(prog, np.array([t, r]))
        if isinstance(want, float):
            assert got == pytest.approx(want, rel=1e-14, abs=1e-300)
        else:
            assert not math.isfinite(got)


@settings(max_examples=500, deadline=None)
@given(st.text(alphabet="tr0123456789.+-*/^(), sincoxplqtabe", max_size=30))
def test_fuzz_only_expression_errors(src):
    try:
        node = expr.parse(src, ("t", "r"))
    except expr.ExprError:
        return
    try:
        expr.evaluate(node, {"t": 0.5, "r": 1.5})
    except expr.ExprError:
        pass


def test_array_matches_scalar():
    node = expr.parse("t^2*(exp(t^2*exp(r))+1)+1", ("t", "r"))
    t = np.linspace(-2, 2, 9)
    arr = expr.evaluate_array(node, {"t": t, "r": 0.5})
    np.testing.assert_allclose(arr, [expr.evaluate(node, {"t": v, "r": 0.5}) for v in t], rtol=1e-15)
