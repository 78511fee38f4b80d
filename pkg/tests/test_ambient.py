import numpy as np
import pytest

from bislant.ambient import AmbientSpace
from bislant.numerics import fd_directional

SIGMA = "-(x1^2 + x5^2 + 1)"


def test_J_squares_to_minus_identity():
    sp = AmbientSpace.from_source(3)
    v = np.arange(6.0)
    assert np.allclose(sp.apply_J(sp.apply_J(v)), -v)
    assert sp.apply_J(np.array([1.0, 0, 0, 0, 0, 0])).tolist() == [0, 0, 0, 1, 0, 0]
    with pytest.raises(ValueError):
        sp.apply_J(np.zeros(5))


def test_y_names_alias_second_half():
    a = AmbientSpace.from_source(2, "x3^2 + x4")
    b = AmbientSpace.from_source(2, "y1^2 + y2")
    p = np.array([0.1, 0.2, 0.3, 0.4])
    assert np.allclose(a.sigma_data(p)[1], b.sigma_data(p)[1])
    assert np.allclose(a.sigma_data(p)[1], [0, 0, 0.6, 1])


def test_lee_data_and_duality():
    sp = AmbientSpace.from_source(4, SIGMA)
    p = np.linspace(0.1, 0.8, 8)
    omega, B = sp.lee_data(p)
    sig = -(p[0] ** 2 + p[4] ** 2 + 1)
    expected = np.zeros(8)
    expected[0], expected[4] = -2 * p[0], -2 * p[4]
    assert np.allclose(omega, expected)
    assert np.allclose(B, np.exp(-sig) * expected)
    theta, A = sp.anti_lee_data(p)
    g = sp.metric(p)
    V = np.arange(8.0)
    # Theta = omega o J and A is its metric dual
    assert np.isclose(theta @ V, omega @ sp.apply_J(V))
    assert np.isclose(g(A, V), theta @ V)
    assert np.allclose(A, -sp.apply_J(B))


@pytest.mark.parametrize("sigma", ["0", SIGMA, "0.3*x1*y2 - x2^2"])
def test_structure_equations_hold(sigma):
    sp = AmbientSpace.from_source(2 if sigma != SIGMA else 4, sigma)
    p = np.linspace(-0.4, 0.5, sp.dim)
    checks = sp.check_structure(p)
    assert all(c.passed for c in checks), checks


def test_flat_structure_is_exact():
    sp = AmbientSpace.from_source(2)
    assert max(c.residual for c in sp.check_structure(np.ones(4))) <= 1e-12


def test_wrong_lee_sign_is_rejected():
    sp = AmbientSpace.from_source(4, SIGMA, lee_sign=-1.0)
    checks = {c.check: c for c in sp.check_structure(np.linspace(0.1, 0.8, 8))}
    assert not checks["ambient.dOmega"].passed
    assert not checks["ambient.weyl_metric"].passed


def test_levi_civita_is_metric():
    # U g(V,V) = 2 g(nabla_U V, V) for a varying field
    sp = AmbientSpace.from_source(2, "x1*x2 - x3^2")
    p = np.array([0.2, -0.3, 0.4, 0.1])
    U = np.array([0.3, 1.0, -0.5, 0.2])

    def V(x):
        return np.array([x[0] ** 2, 1 + x[1], np.sin(x[2]), x[3] * x[0]])

    nab = sp.levi_civita(V, p, U)
    lhs = fd_directional(lambda x: np.array([sp.metric(x)(V(x), V(x))]), p, U)[0]
    assert np.isclose(lhs, 2 * sp.metric(p)(nab, V(p)), atol=1e-8)
