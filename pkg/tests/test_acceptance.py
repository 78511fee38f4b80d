"""Acceptance suite: one pass/fail line per criterion.

Run under pytest (lines are repeated in the terminal summary) or directly
with ``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import functools
import math
import sys
import tempfile
from pathlib import Path

import numpy as np
import pytest

from bislant.cli import Overrides, main, run
from bislant.immersion import _frame_lifts, immersion
from bislant.report import report_from_json
from bislant.scenario import builtin
from bislant.slant import slant_angle

SCENARIOS = ("paper-example", "paper-example-kahler", "kahler-product")
FLAT = ("paper-example-kahler", "kahler-product")


@functools.cache
def determinism_runs() -> tuple[bytes, bytes]:
    out = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            path = Path(tmp) / f"run{k}.json"
            main(["all", "--builtin", "paper-example", "--seed", "7", "--format", "json", "--output", str(path)])
            out.append(path.read_bytes())
    return out[0], out[1]


@functools.cache
def report(name: str):
    if name == "paper-example":
        return report_from_json(determinism_runs()[0].decode())
    return run("all", builtin(name))[0]


@functools.cache
def control(kind: str):
    if kind == "lee":
        return run("ambient-check", builtin("paper-example"), Overrides(flip_lee=True))[0]
    return run("warped-check", builtin("paper-example"), Overrides(flip_warp=True))[0]


def worst(rep, check: str) -> float:
    return max((c.residual for c in rep.results(check)), default=math.nan)


def count(rep, check: str) -> int:
    return len(rep.results(check))


def all_below(rep, checks, tol) -> bool:
    return all(count(rep, c) and worst(rep, c) <= tol for c in checks)


# --------------------------------------------------------------------------
# criteria
# --------------------------------------------------------------------------


def criterion_1():
    rep = report("paper-example")
    names = ("ambient.dOmega", "ambient.nablaJ", "ambient.lee_closed")
    ok_main = all_below(rep, names, 1e-4) and count(rep, names[0]) >= 50
    flip = control("lee").results("ambient.dOmega")
    frac = sum(not c.passed for c in flip) / len(flip)
    detail = (
        f"{count(rep, names[0])} points, max residuals "
        + ", ".join(f"{n.split('.')[1]}={worst(rep, n):.2e}" for n in names)
        + f"; sign-flip fails dOmega at {frac:.0%} of points"
    )
    return ok_main and frac >= 0.9, detail


def criterion_2():
    names = ("frame.P2_tF", "frame.f2_Ft", "frame.FP_fF", "frame.tf_Pt")
    worsts = {s: max(worst(report(s), n) for n in names) for s in SCENARIOS}
    ok = all(all_below(report(s), names, 1e-6) for s in SCENARIOS)
    return ok, "max over scenarios: " + ", ".join(f"{s}={w:.2e}" for s, w in worsts.items())


def _spot_values():
    sc = builtin("paper-example")
    st = immersion(sc.chart, sc.space, sc.profile).frame(np.array([0.6, 0.1, 1.5, 0.5]))
    r1 = slant_angle(st, sc.split.I1, sc.profile)
    r2 = slant_angle(st, sc.split.I2, sc.profile)
    exact1 = (0.6 * 0.1 - 1) ** 2 * math.cos(0.5) ** 2 / ((1 + 0.36) * (1 + 0.01))
    exact2 = (1.5 * 0.5 - 1) ** 2 * math.cos(1.0) ** 2 / ((1 + 2.25) * (1 + 0.25))
    return r1, r2, exact1, exact2


def criterion_3():
    rep = report("paper-example")
    d1, d2 = "slant.d1.declared_angle", "slant.d2.declared_angle"
    ok_grid = all_below(rep, (d1, d2), 1e-6) and min(count(rep, d1), count(rep, d2)) >= 50
    ok_spread = all_below(rep, ("slant.d1.eig_spread", "slant.d2.eig_spread"), 1e-6)
    r1, r2, e1, e2 = _spot_values()
    ok_spot = (
        abs(r1.cos2 - e1) <= 1e-6
        and abs(r2.cos2 - e2) <= 1e-6
        and abs(r1.cos2 - 0.49541) < 1e-5
        and abs(r2.cos2 - 0.004491) < 5e-7
        and max(r1.eig_spread, r2.eig_spread) <= 1e-6
    )
    detail = (
        f"{count(rep, d1)} points, closed-form gap {max(worst(rep, d1), worst(rep, d2)):.2e}; "
        f"cos2(theta1)(0.6,0.1)={r1.cos2:.6f}, cos2(theta2)(1.5,0.5)={r2.cos2:.7f}"
    )
    return ok_grid and ok_spread and ok_spot, detail


def criterion_4():
    rep = report("paper-example")
    names = ("slant.d1.conformal_invariance", "slant.d2.conformal_invariance")
    return all_below(rep, names, 1e-8), f"max |theta(sigma) - theta(0)| = {max(worst(rep, n) for n in names):.2e}"


def _lee_on_base(u) -> float:
    sc = builtin("paper-example")
    imm = immersion(sc.chart, sc.space, sc.profile)
    st = imm.frame(np.asarray(u))
    X, _ = _frame_lifts(imm, st, sc.split.I1)
    return max(abs(st.g(st.B, x)) for x in X)


def criterion_5():
    rep = report("paper-example")
    identities = [f"lemma.{k}" for k in ("1_hXZ_FY", "2_hXZ_FW", "3_hXY_FZ", "4_hZW_FX", "5_dlog_lambda")]
    ok = all_below(rep, identities, 1e-4) and all_below(rep, ["lemma.6_B_fiber"], 1e-6)
    flip = control("warp")
    misses = 0
    relevant = 0
    for p in flip.points:
        if _lee_on_base(p.u) > 1e-6:
            relevant += 1
            c = next(c for c in p.checks if c.check == "lemma.5_dlog_lambda")
            misses += c.passed
    detail = (
        f"identities 1-5 max {max(worst(rep, n) for n in identities):.2e}, identity 6 max {worst(rep, 'lemma.6_B_fiber'):.2e}; "
        f"flipped warp fails identity 5 at {relevant - misses}/{relevant} points with g(B,X) != 0"
    )
    return ok and relevant > 0 and misses == 0, detail


def criterion_6():
    rep = report("paper-example")
    prod = report("kahler-product")
    ok = worst(rep, "char.grad_log_lambda") <= 1e-6 and all_below(rep, ("char.nabla_XZ", "char.nabla_ZX"), 1e-4)
    names = ("char.grad_log_lambda", "char.nabla_XZ", "char.nabla_ZX")
    ok_prod = all_below(prod, names, 1e-10)
    detail = (
        f"grad(ln lambda)-B/2: {worst(rep, 'char.grad_log_lambda'):.2e}, "
        f"nabla_XZ-omega(X)Z/2: {max(worst(rep, n) for n in names[1:]):.2e}; "
        f"product scenario max {max(worst(prod, n) for n in names):.2e}"
    )
    return ok and ok_prod, detail


def criterion_7():
    flat = report("paper-example-kahler")
    rep = report("paper-example")
    tg = lambda r, d: r.results(f"slant.{d}.totally_geodesic")  # noqa: E731
    ok_flat = all(c.passed for d in ("d1", "d2") for c in tg(flat, d))
    ok_d1 = all(c.passed for c in tg(rep, "d1"))
    ok_umb = all(c.passed for c in rep.results("slant.d2.totally_umbilic"))
    ok_mean = worst(rep, "char.fiber_mean_curvature") <= 1e-4
    d2_fails = sum(not c.passed for c in tg(rep, "d2"))
    ok_ctrl = d2_fails == len(tg(rep, "d2")) > 0
    detail = (
        f"flat: both leaves totally geodesic={ok_flat}; warped: D1 totally geodesic={ok_d1}, "
        f"D2 umbilic={ok_umb} with |H + B^T/2| {worst(rep, 'char.fiber_mean_curvature'):.2e}, "
        f"D2 totally geodesic fails at {d2_fails}/{len(tg(rep, 'd2'))} points"
    )
    return ok_flat and ok_d1 and ok_umb and ok_mean and ok_ctrl, detail


def criterion_8():
    slacks = {s: min(p.values["chen_slack"] for p in report(s).points) for s in SCENARIOS}
    ok_slack = all(v >= -1e-4 for v in slacks.values())
    prod = report("kahler-product")
    ok_prod = all(
        p.values["chen_rhs"] == 0.0 and p.values["chen_slack"] == p.values["chen_lhs"] for p in prod.points
    )
    ok_blocks = all(worst(report(s), "chen.block_sum") <= 1e-8 for s in SCENARIOS)
    detail = (
        "min slack " + ", ".join(f"{s}={v:.3g}" for s, v in slacks.items())
        + f"; product rhs=0 and slack=lhs: {ok_prod}; block sums max rel. gap "
        + f"{max(worst(report(s), 'chen.block_sum') for s in SCENARIOS):.1e}"
    )
    return ok_slack and ok_prod and ok_blocks, detail


WEYL = ("weyl.induced_connection", "weyl.second_fundamental", "weyl.shape_operator", "weyl.normal_connection")


def criterion_9():
    rep = report("paper-example")
    ok = all_below(rep, WEYL, 1e-4)
    flat_worst = max(worst(report(s), n) for s in FLAT for n in WEYL)
    return ok and flat_worst <= 1e-12, (
        f"builtin max {max(worst(rep, n) for n in WEYL):.2e}; sigma=0 scenarios max {flat_worst:.1e}"
    )


def criterion_10():
    rep = report("paper-example")
    names = ["adapted.gram"] + [f"adapted.{k}_decomposition" for k in ("JX", "JPX", "JZ", "JPZ")]
    return all_below(rep, names, 1e-6), (
        f"Gram residual {worst(rep, 'adapted.gram'):.2e}, J-decomposition max "
        f"{max(worst(rep, n) for n in names[1:]):.2e}"
    )


def criterion_11():
    a, b = determinism_runs()
    return a == b, f"two runs of `all --builtin paper-example --seed 7` -> {len(a)} bytes each, identical={a == b}"


CRITERIA = {
    1: ("structure equations", criterion_1),
    2: ("operator identities", criterion_2),
    3: ("slant-angle oracle", criterion_3),
    4: ("conformal slant invariance", criterion_4),
    5: ("warped-product identities", criterion_5),
    6: ("warping gradient and connection", criterion_6),
    7: ("leaf-condition battery", criterion_7),
    8: ("second fundamental form bound", criterion_8),
    9: ("Weyl-side relations", criterion_9),
    10: ("adapted frame", criterion_10),
    11: ("determinism", criterion_11),
}


def line(k: int) -> tuple[bool, str]:
    title, fn = CRITERIA[k]
    ok, detail = fn()
    return ok, f"[{'PASS' if ok else 'FAIL'}] criterion {k:>2} {title}: {detail}"


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k, acceptance_log):
    ok, text = line(k)
    acceptance_log(text)
    assert ok, text


if __name__ == "__main__":
    results = [line(k) for k in sorted(CRITERIA)]
    for _, text in results:
        print(text)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
