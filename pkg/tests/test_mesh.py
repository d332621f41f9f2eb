import numpy as np
import pytest

from kirchhoff.linalg import assemble_laplacian
from kirchhoff.mesh import Field, Mesh, apply_pointwise, gradient_energy, l2_norm, linf_norm


def test_spacing_and_nodes():
    m = Mesh(1, n=3)
    assert m.h == (0.25,)
    np.testing.assert_allclose(m.axes[0], [0.25, 0.5, 0.75])
    m2 = Mesh(2, [(0, 2), (0, 1)], n=(3, 1 + 2))
    assert m2.size == 9 and m2.h == (0.5, 0.25)


def test_storage_order_x_fastest():
    m = Mesh(2, n=(3, 2))
    x, y = m.coords()
    np.testing.assert_allclose(x[:3], m.axes[0])
    assert np.all(y[:3] == m.axes[1][0])


@pytest.mark.parametrize("kw", [{"dim": 3}, {"dim": 1, "n": 1}, {"dim": 1, "bounds": [(1, 0)]}, {"dim": 2, "n": (4,)}])
def test_invalid_meshes(kw):
    with pytest.raises(ValueError):
        Mesh(**kw)


def test_refined_keeps_nodes():
    m = Mesh(1, n=7)
    np.testing.assert_allclose(m.refined().axes[0][1::2], m.axes[0])


def test_field_is_immutable_and_finite():
    m = Mesh(1, n=4)
    f = m.sample(lambda x: x)
    with pytest.raises(ValueError):
        f.values[0] = 1.0
    with pytest.raises(ValueError):
        Field(m, [0, np.nan, 0, 0])
    with pytest.raises(ValueError):
        Field(m, [0, 1])


@pytest.mark.parametrize("dim", [1, 2])
def test_energy_is_the_laplacian_quadratic_form(dim):
    m = Mesh(dim, n=17 if dim == 1 else (9, 7))
    rng = np.random.default_rng(3)
    u = Field(m, rng.standard_normal(m.size))
    A = assemble_laplacian(m)
    assert gradient_energy(u) == pytest.approx(m.cell_measure * A.quadratic_form(u.values), rel=1e-13)


def test_energy_of_sine():
    m = Mesh(1, n=1023)
    u = m.sample(lambda x: np.sin(np.pi * x))
    # int_0^1 (pi cos(pi x))^2 dx = pi^2/2
    assert gradient_energy(u) == pytest.approx(np.pi**2 / 2, rel=1e-5)
    assert l2_norm(u) == pytest.approx(np.sqrt(0.5), rel=1e-6)
    assert linf_norm(u) == pytest.approx(1.0, abs=1e-5)


def test_csv_round_trip(tmp_path):
    m = Mesh(2, n=(3, 2))
    f = m.sample(lambda x, y: x + 10 * y)
    path = tmp_path / "f.csv"
    f.to_csv(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    assert path.read_text().splitlines()[0] == "x,y,value"
    np.testing.assert_array_equal(data[:, 2], f.values)


def test_apply_pointwise_reports_node():
    m = Mesh(1, n=4)
    f = Field(m, [1.0, 2.0, -1.0, 3.0])

    def fn(v):
        if np.any(v < 0):
            raise ValueError("negative input")
        return np.sqrt(v)

    with pytest.raises(ValueError, match="node 2"):
        apply_pointwise(f, fn)
    np.testing.assert_allclose(apply_pointwise(m.sample(lambda x: x), np.square).values, m.axes[0] ** 2)
