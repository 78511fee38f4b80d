import math

import numpy as np
import pytest

from bislant.ambient import AmbientSpace
from bislant.immersion import (
    Chart,
    GuardViolation,
    NotNormalError,
    check_frame_identities,
    check_PFtf_derivatives,
    check_weyl_relations,
    immersion,
    normal_connection,
    second_fundamental,
)
from bislant.numerics import fd_directional
from bislant.scenario import builtin

CYLINDER = Chart.from_sources(["cos(u1)", "sin(u1)", "u2", "0"], ["u1", "u2"])
FLAT2 = AmbientSpace.from_source(2)


def test_jacobian_matches_finite_differences():
    sc = builtin("paper-example")
    u = np.array([0.7, 0.2, 1.6, 0.4])
    x, jac = sc.chart.evaluate(u)
    for i in range(4):
        e = np.eye(4)[i]
        fd = fd_directional(lambda p: sc.chart.evaluate(p)[0], u, e)
        assert np.allclose(jac[:, i], fd, atol=1e-9)


def test_guard_rejects_points():
    chart = Chart.from_sources(["u1", "u2", "sqrt(u1)", "0"], ["u1", "u2"], guards=["u1 - 0.1"])
    assert chart.admitted([0.5, 0])
    assert not chart.admitted([0.05, 0])
    with pytest.raises(GuardViolation):
        immersion(chart, FLAT2).frame([0.0, 0.0])


def test_guard_domain_error_counts_as_rejection():
    chart = Chart.from_sources(["u1", "u2", "0", "0"], ["u1", "u2"], guards="log(u1)")
    assert not chart.admitted([-1.0, 0.0])


def test_cylinder_curvature():
    st = second_fundamental(CYLINDER, FLAT2, [0.4, 1.0])
    # along the circle h(e, e) is the inward unit normal, along the line it vanishes
    assert math.isclose(st.norm(st.h[0, 0]), 1.0, abs_tol=1e-6)
    assert np.allclose(st.h[0, 0], -np.array([math.cos(0.4), math.sin(0.4), 0, 0]), atol=1e-6)
    assert st.norm(st.h[1, 1]) < 1e-8
    assert st.norm(st.h[0, 1]) < 1e-8


def test_plane_is_totally_geodesic():
    chart = Chart.from_sources(["u1 + u2", "u2", "2*u1", "0"], ["u1", "u2"])
    st = second_fundamental(chart, FLAT2, [0.3, -0.2])
    assert np.max(np.abs(st.h)) < 1e-9


def test_conformal_plane_second_fundamental():
    # Under g = e^sigma g0 the plane picks up h(U, V) = -1/2 g(U, V) B^perp
    space = AmbientSpace.from_source(2, "x3")
    chart = Chart.from_sources(["u1", "u2", "0", "0"], ["u1", "u2"])
    st = second_fundamental(chart, space, [0.2, 0.5])
    expected = -0.5 * st.B_N
    assert np.allclose(st.h[0, 0], expected, atol=1e-8)
    assert np.allclose(st.h[1, 1], expected, atol=1e-8)


@pytest.mark.parametrize("name", ["paper-example", "paper-example-kahler", "kahler-product"])
def test_frame_identities(name):
    sc = builtin(name)
    u = sc.samples.points(sc.chart.params)[13]
    st = second_fundamental(sc.chart, sc.space, u, sc.profile)
    checks = check_frame_identities(st, sc.profile)
    assert all(c.passed for c in checks), checks
    assert st.E.shape == (8, 4) and st.N.shape == (8, 4)


def test_weyl_relations_vanish_for_flat_ambient():
    checks = check_weyl_relations(CYLINDER, FLAT2, [0.4, 1.0])
    assert max(c.residual for c in checks) < 1e-9


def test_weyl_and_operator_derivatives_on_builtin():
    sc = builtin("paper-example")
    u = np.array([0.75, 0.275, 1.6, 0.45])
    checks = check_weyl_relations(sc.chart, sc.space, u, sc.profile)
    checks += check_PFtf_derivatives(sc.chart, sc.space, u, sc.profile)
    assert all(c.passed for c in checks), [c for c in checks if not c.passed]


def test_normal_connection_requires_normal_field():
    with pytest.raises(NotNormalError):
        normal_connection(CYLINDER, FLAT2, [0.4, 1.0], lambda p: np.array([0, 0, 1.0, 0]), 0)


def test_normal_connection_of_radial_field():
    def radial(p):
        return np.array([math.cos(p[0]), math.sin(p[0]), 0.0, 0.0])

    perp, resid = normal_connection(CYLINDER, FLAT2, [0.4, 1.0], radial, 0)
    assert np.linalg.norm(perp) < 1e-8
    assert resid < 1e-6
