import math

import numpy as np
import pytest

from kirchhoff.errors import ConvergenceError, OperatorError
from kirchhoff.linalg import SparseOperator, assemble_laplacian, assemble_schrodinger, cg_solve, smallest_eigenvalue
from kirchhoff.mesh import Mesh


def test_laplacian_stencil():
    A = assemble_laplacian(Mesh(1, n=3)).toarray()
    np.testing.assert_allclose(A, 16 * np.array([[2, -1, 0], [-1, 2, -1], [0, -1, 2]]))
    A2 = assemble_laplacian(Mesh(2, n=(3, 3)))
    assert A2.is_symmetric()
    assert A2.toarray()[4, 4] == pytest.approx(4 * 16)


def test_operator_is_read_only():
    A = assemble_laplacian(Mesh(1, n=5))
    with pytest.raises(ValueError):
        A.data[0] = 0.0


def test_cg_solves_poisson(backend):
    m = Mesh(1, n=511)
    A = assemble_laplacian(m)
    x = m.axes[0]
    res = cg_solve(A, np.pi**2 * np.sin(np.pi * x) + 1.0, backend=backend)
    exact = np.sin(np.pi * x) + x * (1 - x) / 2
    assert np.max(np.abs(res.x - exact)) < 1e-5
    assert res.residual <= 1e-10


def test_cg_energy_error_decreases(backend):
    """A-norm error against a dense solve is nonincreasing at every iteration."""
    m = Mesh(2, n=(12, 9))
    A = assemble_laplacian(m)
    rng = np.random.default_rng(0)
    b = rng.standard_normal(m.size)
    xs = np.linalg.solve(A.toarray(), b)
    errs = []
    cg_solve(A, b, tol=1e-12, backend=backend, callback=lambda k, x: errs.append(A.quadratic_form(x - xs)))
    assert len(errs) > 5
    assert all(e2 <= e1 * (1 + 1e-12) + 1e-20 for e1, e2 in zip(errs, errs[1:]))


def test_cg_rejects_indefinite(backend):
    A = assemble_laplacian(Mesh(1, n=32)).shifted(50.0)
    with pytest.raises(OperatorError):
        cg_solve(A, np.ones(32), backend=backend)


def test_cg_iteration_budget(backend):
    A = assemble_laplacian(Mesh(1, n=200))
    with pytest.raises(ConvergenceError):
        cg_solve(A, np.linspace(0, 1, 200), maxit=3, backend=backend)


def test_cg_zero_rhs():
    res = cg_solve(assemble_laplacian(Mesh(1, n=8)), np.zeros(8))
    np.testing.assert_array_equal(res.x, 0.0)


def test_eigenvalue_interval():
    lam, v = smallest_eigenvalue(assemble_laplacian(Mesh(1, n=256)))
    assert lam == pytest.approx(math.pi**2, rel=5e-3)
    # exact discrete eigenvalue
    h = 1 / 257
    assert lam == pytest.approx(4 / h**2 * math.sin(math.pi * h / 2) ** 2, rel=1e-10)
    assert np.linalg.norm(v) == pytest.approx(1.0) and v.sum() > 0


def test_eigenvalue_square():
    lam, _ = smallest_eigenvalue(assemble_laplacian(Mesh(2, n=64)))
    assert lam == pytest.approx(2 * math.pi**2, rel=1e-2)


def test_shift_identity():
    m = Mesh(1, n=128)
    lam, _ = smallest_eigenvalue(assemble_laplacian(m))
    lam_c, _ = smallest_eigenvalue(assemble_schrodinger(m, 20.0))
    assert abs(lam_c - (lam - 20.0)) <= 1e-10 * max(1, abs(lam))


def test_rayleigh_bound():
    """lambda_1 is below the Rayleigh quotient of 20 random vectors."""
    m = Mesh(2, n=(10, 8))
    A = assemble_schrodinger(m, m.sample(lambda x, y: 30 * x * y))
    lam, _ = smallest_eigenvalue(A)
    rng = np.random.default_rng(7)
    for _ in range(20):
        x = rng.standard_normal(m.size)
        assert lam <= A.quadratic_form(x) / (x @ x) + 1e-12
    assert lam == pytest.approx(np.linalg.eigvalsh(A.toarray())[0], rel=1e-10)


def test_gershgorin_is_a_lower_bound():
    A = assemble_schrodinger(Mesh(1, n=20), np.linspace(-5, 5, 20))
    assert A.gershgorin_lower() <= np.linalg.eigvalsh(A.toarray())[0]


def test_schrodinger_rejects_infinite_alpha():
    with pytest.raises(ValueError):
        assemble_schrodinger(Mesh(1, n=4), [0, math.inf, 0, 0])


def test_operator_from_dense():
    A = SparseOperator(np.array([[2.0, -1.0], [-1.0, 2.0]]))
    np.testing.assert_allclose(A @ [1.0, 1.0], [1.0, 1.0])
    assert A.minus_diagonal([1.0, 1.0]).diagonal().tolist() == [1.0, 1.0]
