"""The compiled kernels and the pure-Python fallback agree."""

import numpy as np
import pytest

from kirchhoff import kernels
from kirchhoff.linalg import assemble_laplacian, cg_solve
from kirchhoff.mesh import Mesh
from kirchhoff.model import CoefficientModel, PrimitiveMap
from kirchhoff.nonlocal_solver import Problem, evaluate_S
from kirchhoff.model import Nonlinearity

pytestmark = pytest.mark.skipif("compiled" not in kernels.available(), reason="compiled kernels not built")


def test_active_backend_is_reported():
    assert kernels.BACKEND in ("compiled", "python")
    assert kernels.get("python").BACKEND == "python"
    with pytest.raises(ValueError):
        kernels.get("fortran")


@pytest.mark.parametrize("family", ["poly", "exp"])
def test_primitive_agreement(family):
    cm = CoefficientModel.family(family, p=2.0)
    t = np.linspace(-2.5, 2.5, 101)
    a = PrimitiveMap(cm, 0.8, backend="compiled")
    b = PrimitiveMap(cm, 0.8, backend="python")
    np.testing.assert_allclose(a.eval(t), b.eval(t), rtol=1e-12)
    s = a.eval(t)
    np.testing.assert_allclose(a.invert(s), b.invert(s), rtol=1e-12, atol=1e-14)


def test_cg_agreement():
    m = Mesh(2, n=(20, 16))
    A = assemble_laplacian(m)
    b = np.cos(np.arange(m.size))
    xa = cg_solve(A, b, backend="compiled").x
    xb = cg_solve(A, b, backend="python").x
    np.testing.assert_allclose(xa, xb, rtol=1e-12, atol=1e-14)


def test_S_agreement():
    cm = CoefficientModel("t^2+1+r", 1.0)
    nl = Nonlinearity("pi^2*sin(pi*x)", "source")
    vals = [evaluate_S(Problem(Mesh(1, n=63), cm, nl, backend=k), 1.0).S for k in ("compiled", "python")]
    assert vals[0] == pytest.approx(vals[1], rel=1e-12)
