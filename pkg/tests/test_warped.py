import copy
import math

import numpy as np
import pytest

from bislant.immersion import immersion
from bislant.scenario import builtin, builtin_document, scenario_from_dict
from bislant.warped import (
    ChenRecord,
    DegenerateAngleError,
    InvalidWarpError,
    WarpDeclaration,
    adapted_frame,
    check_characterization,
    check_lemma_identities,
    check_warp,
    chen_checks,
    chen_inequality,
    equality_case,
)

U = np.array([0.75, 0.275, 1.6, 0.45])


def scaled(c):
    """The warped builtin with sigma and the warping exponent scaled by ``c``."""
    doc = copy.deepcopy(builtin_document("paper-example"))
    doc["ambient"]["sigma"] = f"-{c}*(x1^2 + x5^2 + 1)"
    doc["warp"]["lambda"] = f"exp(-{c}*((u1*cos(u2))^2 + (u2*cos(u1))^2 + 1)/2)"
    return scenario_from_dict(doc)


def run(fn, sc, u=U):
    return {c.check: c for c in fn(sc.chart, sc.space, sc.split, sc.warp, u, sc.profile)}


def test_fiber_dependent_warp_is_rejected():
    sc = builtin("paper-example")
    with pytest.raises(InvalidWarpError):
        WarpDeclaration.from_source("exp(u3)", sc.chart.params, sc.split)


def test_warp_validation():
    sc = builtin("paper-example")
    checks = run(check_warp, sc)
    assert all(c.passed for c in checks.values())
    bad = WarpDeclaration.from_source("1 + u1", sc.chart.params, sc.split)
    checks = {c.check: c for c in check_warp(sc.chart, sc.space, sc.split, bad, U, sc.profile)}
    assert checks["warp.positive"].passed
    assert not checks["warp.fiber_separable"].passed
    neg = WarpDeclaration.from_source("-1", sc.chart.params, sc.split)
    checks = {c.check: c for c in check_warp(sc.chart, sc.space, sc.split, neg, U, sc.profile)}
    assert not checks["warp.positive"].passed
    with pytest.raises(InvalidWarpError):
        neg.dlog(sc.chart, U)


@pytest.mark.parametrize("c", [0.5, 1, 2])
def test_identities_under_scaled_conformal_factor(c):
    sc = scaled(c)
    lemma = run(check_lemma_identities, sc)
    char = run(check_characterization, sc)
    assert len(lemma) == 6
    assert all(x.passed for x in lemma.values()), lemma
    assert all(x.passed for x in char.values()), char


def test_identity_five_detects_a_wrong_warp():
    sc = builtin("paper-example")
    inverted = WarpDeclaration.from_source(
        "exp(((u1*cos(u2))^2 + (u2*cos(u1))^2 + 1)/2)", sc.chart.params, sc.split
    )
    checks = {c.check: c for c in check_lemma_identities(sc.chart, sc.space, sc.split, inverted, U, sc.profile)}
    assert not checks["lemma.5_dlog_lambda"].passed
    assert checks["lemma.1_hXZ_FY"].passed


def test_product_characterization_is_exact():
    sc = builtin("kahler-product")
    char = run(check_characterization, sc, np.array([0.2, -0.1, 0.5, 0.3]))
    assert max(c.residual for c in char.values()) < 1e-10


def test_adapted_frame_is_orthonormal():
    sc = builtin("paper-example")
    st = immersion(sc.chart, sc.space, sc.profile).frame(U)
    fr = adapted_frame(st, sc.split, sc.profile)
    assert fr.gram_residual < 1e-10
    assert len(fr.all_vectors()) == 8
    assert max(fr.j_residuals.values()) < 1e-10
    assert 0 < fr.theta1 < math.pi / 2 and 0 < fr.theta2 < math.pi / 2


def test_adapted_frame_rejects_degenerate_angles():
    doc = copy.deepcopy(builtin_document("kahler-product"))
    # a complex line as the first distribution: theta1 = 0
    doc["chart"]["components"] = ["u1", "0", "u3", "sin(pi/3)*u4", "u2", "0", "cos(pi/3)*u4", "0"]
    sc = scenario_from_dict(doc)
    st = immersion(sc.chart, sc.space, sc.profile).frame(np.array([0.1, 0.2, 0.3, 0.4]))
    with pytest.raises(DegenerateAngleError) as err:
        adapted_frame(st, sc.split, sc.profile)
    assert err.value.which == "theta1"


def test_chen_bound_on_warped_builtin():
    sc = builtin("paper-example")
    rec = chen_inequality(sc.chart, sc.space, sc.split, U, sc.profile)
    assert rec.slack > 0
    assert rec.block_sum == pytest.approx(rec.lhs, rel=1e-10)
    checks, diag = chen_checks(rec, sc.profile)
    assert diag.status == "strict"
    assert all(c.passed for c in checks)


def test_chen_bound_on_product_is_zero():
    sc = builtin("kahler-product")
    rec = chen_inequality(sc.chart, sc.space, sc.split, np.array([0.2, -0.1, 0.5, 0.3]), sc.profile)
    assert rec.rhs == 0.0
    assert rec.lhs < 1e-12
    _, diag = chen_checks(rec, sc.profile)
    assert diag.status == "equality"


def record(**kw):
    base = dict(
        theta1=0.5, theta2=1.0, lhs=1.0, rhs=1.0, slack=0.0, terms={}, component_norms={"d1d1.fd1": 1.0},
        mu_norm=0.0, mean_curvature_norm=0.0, mixed_tg=0.0,
    )
    base.update(kw)
    return ChenRecord(**base)


def test_equality_case_diagnosis():
    assert equality_case(record(slack=1.0)).status == "strict"
    assert equality_case(record(slack=-1.0)).status == "inequality-violated"
    assert equality_case(record()).status == "equality"
    # image of h leaves F(D1) + F(D2)
    assert equality_case(record(mu_norm=0.3)).status == "violation"
    # minimal but not mixed totally geodesic
    diag = equality_case(record(mixed_tg=0.2))
    assert diag.status == "violation"
    assert not {c.check: c for c in diag.checks}["chen.equality.minimal_iff_mixed_tg"].passed


def test_slack_gate_fails_when_bound_is_exceeded():
    checks, diag = chen_checks(record(lhs=1.0, rhs=2.0, slack=-1.0))
    assert not {c.check: c for c in checks}["chen.slack"].passed
    assert diag.status == "inequality-violated"
