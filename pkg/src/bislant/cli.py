"""Command-line front end: sample a scenario, run check batteries, emit a report.

Exit codes: 0 every gate passed, 1 some gate failed, 2 usage or scenario
error, 3 too many numerically degenerate sample points.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import __version__
from .ambient import AmbientSpace
from .immersion import (
    GuardViolation,
    check_frame_identities,
    check_PFtf_derivatives,
    check_weyl_relations,
    immersion,
)
from .numerics import NumericsError
from .report import CheckReport, PointResult, emit, gate
from .scenario import BUILTINS, Scenario, ScenarioError, builtin, load_scenario
from .slant import NotInvariantError, check_d1_conditions, check_d2_conditions, mixed_tg_check, slant_angle
from .warped import (
    DegenerateAngleError,
    WarpDeclaration,
    adapted_frame,
    chen_checks,
    chen_inequality,
    check_characterization,
    check_lemma_identities,
    check_warp,
)

__all__ = ["COMMANDS", "Overrides", "run", "main"]

COMMANDS = ("ambient-check", "frame-report", "slant-check", "warped-check", "chen", "all")
EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_DEGENERATE = 0, 1, 2, 3


@dataclass(frozen=True)
class Overrides:
    tol_first: float | None = None
    tol_second: float | None = None
    grid: int | None = None
    random: int | None = None
    seed: int | None = None
    allow_degenerate_angles: bool = False
    flip_warp: bool = False
    flip_lee: bool = False
    skip_fraction: float = 0.1

    def as_dict(self) -> dict:
        return {k: v for k, v in dataclasses.asdict(self).items() if v not in (None, False)}


class _Degenerate(Exception):
    """A sample point where the numerics cannot proceed."""

    def __init__(self, reason: str, angle: bool = False):
        super().__init__(reason)
        self.angle = angle


@dataclass
class _Context:
    scenario: Scenario
    space: AmbientSpace
    flat: AmbientSpace
    warp: WarpDeclaration | None
    overrides: Overrides

    @property
    def chart(self):
        return self.scenario.chart

    @property
    def split(self):
        return self.scenario.split

    @property
    def profile(self):
        return self.scenario.profile


def _apply(scenario: Scenario, ov: Overrides) -> _Context:
    profile = scenario.profile
    changes = {k: getattr(ov, k) for k in ("tol_first", "tol_second") if getattr(ov, k) is not None}
    if changes:
        profile = dataclasses.replace(profile, **changes)
    samples = scenario.samples
    if ov.grid is not None:
        samples = dataclasses.replace(samples, mode="grid", counts={p: ov.grid for p in samples.counts})
    if ov.random is not None:
        samples = dataclasses.replace(samples, mode="random", count=ov.random)
    if ov.seed is not None:
        samples = dataclasses.replace(samples, seed=ov.seed)
    scenario = dataclasses.replace(scenario, profile=profile, samples=samples)
    base = scenario.space
    space = AmbientSpace(base.n, base.sigma, -1.0 if ov.flip_lee else 1.0)
    flat = AmbientSpace.from_source(base.n, "0")
    warp = scenario.warp
    if warp is not None and ov.flip_warp:
        src = scenario.document["warp"]["lambda"]
        warp = WarpDeclaration.from_source(f"1/({src})", scenario.chart.params, scenario.split)
    return _Context(scenario, space, flat, warp, ov)


# --------------------------------------------------------------------------
# per-point batteries
# --------------------------------------------------------------------------

Battery = Callable[[_Context, np.ndarray, PointResult], None]


def _ambient(ctx: _Context, u, out: PointResult) -> None:
    x, _ = ctx.chart.evaluate(u)
    out.checks += ctx.space.check_structure(x, ctx.profile)


def _slant_records(ctx: _Context, st, out: PointResult) -> list:
    recs = []
    flat_st = immersion(ctx.chart, ctx.flat, ctx.profile).frame(st.u)
    tol = ctx.profile
    for k, (idx, declared) in enumerate(
        ((ctx.split.I1, ctx.split.declared_cos2_theta1), (ctx.split.I2, ctx.split.declared_cos2_theta2)), 1
    ):
        try:
            rec = slant_angle(st, idx, tol)
        except NotInvariantError as exc:
            out.checks.append(gate(f"slant.d{k}.invariance", exc.residual, tol.tol_first))
            recs.append(None)
            continue
        out.checks.append(gate(f"slant.d{k}.invariance", rec.invariance, tol.tol_first))
        out.checks.append(gate(f"slant.d{k}.eig_spread", rec.eig_spread, tol.tol_eig))
        out.values[f"theta{k}"] = rec.theta
        out.values[f"cos2_theta{k}"] = rec.cos2
        out.values[f"eig_spread{k}"] = rec.eig_spread
        if declared is not None:
            expect = declared.eval(ctx.chart.bindings(st.u))
            out.checks.append(gate(f"slant.d{k}.declared_angle", abs(rec.cos2 - expect), tol.tol_first))
        try:
            flat_rec = slant_angle(flat_st, idx, tol)
            out.checks.append(gate(f"slant.d{k}.conformal_invariance", abs(flat_rec.theta - rec.theta), 1e-8))
        except NotInvariantError as exc:
            out.checks.append(gate(f"slant.d{k}.conformal_invariance", exc.residual, 1e-8))
        recs.append(rec)
    return recs


def _frame(ctx: _Context, u, out: PointResult) -> None:
    st = immersion(ctx.chart, ctx.space, ctx.profile).state(u)
    out.checks += check_frame_identities(st, ctx.profile)
    out.checks += check_weyl_relations(ctx.chart, ctx.space, u, ctx.profile)
    out.checks += check_PFtf_derivatives(ctx.chart, ctx.space, u, ctx.profile)
    recs = _slant_records(ctx, st, out)
    if all(recs):
        r1, r2 = recs
        if not (r1.proper and r2.proper) or abs(r1.theta - r2.theta) <= ctx.profile.tol_first:
            out.notes.append("not proper bi-slant at this point")


def _require_angles(ctx: _Context, u) -> None:
    st = immersion(ctx.chart, ctx.space, ctx.profile).frame(u)
    for idx in (ctx.split.I1, ctx.split.I2):
        slant_angle(st, idx, ctx.profile)


def _slant(ctx: _Context, u, out: PointResult) -> None:
    args = (ctx.chart, ctx.space, ctx.split, u, ctx.profile)
    b1 = check_d1_conditions(*args)
    b2 = check_d2_conditions(*args)
    out.checks += b1.checks + b2.checks
    st = immersion(ctx.chart, ctx.space, ctx.profile).state(u)
    out.values["mixed_tg"] = mixed_tg_check(st, ctx.split, ctx.profile)
    out.values["umbilic_norm_d2"] = st.norm(b2.umbilic_vector)


def _warped(ctx: _Context, u, out: PointResult) -> None:
    args = (ctx.chart, ctx.space, ctx.split, ctx.warp, u, ctx.profile)
    out.checks += check_warp(*args)
    out.checks += check_lemma_identities(*args)
    out.checks += check_characterization(*args)
    out.values["lambda"] = ctx.warp.value(ctx.chart, u)
    st = immersion(ctx.chart, ctx.space, ctx.profile).state(u)
    frame = adapted_frame(st, ctx.split, ctx.profile)
    out.checks.append(gate("adapted.gram", frame.gram_residual, ctx.profile.tol_first))
    for key, r in sorted(frame.j_residuals.items()):
        out.checks.append(gate(f"adapted.{key}_decomposition", r, ctx.profile.tol_first))


def _chen(ctx: _Context, u, out: PointResult) -> None:
    rec = chen_inequality(ctx.chart, ctx.space, ctx.split, u, ctx.profile)
    checks, diag = chen_checks(rec, ctx.profile)
    out.checks += checks
    out.values.update(chen_lhs=rec.lhs, chen_rhs=rec.rhs, chen_slack=rec.slack)
    out.notes.append(f"chen: {diag.message}")


BATTERIES: dict[str, list[Battery]] = {
    "ambient-check": [_ambient],
    "frame-report": [_frame],
    "slant-check": [_slant],
    "warped-check": [_warped],
    "chen": [_chen],
}
BATTERIES["all"] = [b for k in COMMANDS[:-1] for b in BATTERIES[k]]


def _evaluate(ctx: _Context, batteries: list[Battery], index: int, u) -> PointResult:
    out = PointResult(index, tuple(float(v) for v in u))
    for battery in batteries:
        if battery is _warped and ctx.warp is None:
            continue
        part = PointResult(index, out.u)
        try:
            if battery in (_slant, _warped, _chen):
                _require_angles(ctx, u)
            battery(ctx, u, part)
        except NotInvariantError as exc:
            out.checks.append(gate("slant.invariance", exc.residual, ctx.profile.tol_first))
            continue
        except DegenerateAngleError as exc:
            raise _Degenerate(str(exc), angle=True) from exc
        except (NumericsError, GuardViolation) as exc:
            raise _Degenerate(str(exc)) from exc
        out.checks += part.checks
        out.values.update(part.values)
        out.notes += part.notes
    return out


def run(command: str, scenario: Scenario, overrides: Overrides | None = None) -> tuple[CheckReport, int]:
    """Evaluate ``command`` over the scenario's sample points."""
    if command not in COMMANDS:
        raise ScenarioError("", f"unknown command {command!r}")
    ov = overrides or Overrides()
    ctx = _apply(scenario, ov)
    if command == "warped-check" and ctx.warp is None:
        raise ScenarioError("warp", "warped-check needs a declared warping function")
    sc = ctx.scenario
    points = sc.samples.points(sc.chart.params)
    report = CheckReport(
        command=command,
        param_names=tuple(sc.chart.params),
        requested=len(points),
        provenance={
            "scenario": sc.name,
            "scenario_sha256": sc.digest,
            "profile": sc.profile.as_dict(),
            "sampling": {"mode": sc.samples.mode, "seed": sc.samples.seed},
            "overrides": ov.as_dict(),
            "version": __version__,
        },
    )
    if command == "all" and ctx.warp is None:
        report.warnings.append("no warping function declared: warped-product checks skipped")
    angle_skips = 0
    for index, u in enumerate(points):
        if not sc.chart.admitted(u):
            report.skipped += 1
            continue
        try:
            report.points.append(_evaluate(ctx, BATTERIES[command], index, u))
        except _Degenerate as exc:
            report.skipped += 1
            if exc.angle and ov.allow_degenerate_angles:
                angle_skips += 1
            else:
                report.degenerate += 1
            report.warnings.append(f"point {index} skipped: {exc}")
    improper = sum(1 for p in report.points if "not proper bi-slant at this point" in p.notes)
    if improper and not ov.allow_degenerate_angles:
        report.warnings.append(f"{improper} point(s) are not proper bi-slant")
    if angle_skips:
        report.warnings.append(f"{angle_skips} point(s) with degenerate slant angles tolerated")

    if report.requested and report.degenerate > ov.skip_fraction * report.requested:
        return report, EXIT_DEGENERATE
    return report, EXIT_OK if report.all_passed else EXIT_FAIL


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="bislant",
        description="Pointwise verification of bi-slant warped-product geometry on sampled immersions.",
    )
    p.add_argument("command", choices=COMMANDS)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--scenario", metavar="PATH", help="scenario JSON document")
    src.add_argument("--builtin", choices=BUILTINS, help="shipped scenario")
    p.add_argument("--format", choices=("json", "csv", "text"), default="json")
    p.add_argument("--output", metavar="PATH", help="write the report here instead of stdout")
    p.add_argument("--tol-first", type=float)
    p.add_argument("--tol-second", type=float)
    p.add_argument("--grid", type=int, metavar="N", help="grid points per parameter")
    p.add_argument("--random", type=int, metavar="N", help="draw N uniform random points instead of a grid")
    p.add_argument("--seed", type=int)
    p.add_argument("--allow-degenerate-angles", action="store_true",
                   help="do not count degenerate slant angles toward the degeneracy exit code")
    p.add_argument("--skip-fraction", type=float, default=0.1,
                   help="largest tolerated fraction of degenerate points (default 0.1)")
    p.add_argument("--flip-warp", action="store_true", help="negative control: use 1/lambda as warping function")
    p.add_argument("--flip-lee", action="store_true", help="negative control: reverse the sign of the Lee form")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    for name in ("tol_first", "tol_second"):
        v = getattr(args, name)
        if v is not None and not v > 0:
            print(f"error: --{name.replace('_', '-')} must be positive", file=sys.stderr)
            return EXIT_USAGE
    for name in ("grid", "random"):
        v = getattr(args, name)
        if v is not None and v < 1:
            print(f"error: --{name} must be at least 1", file=sys.stderr)
            return EXIT_USAGE
    ov = Overrides(
        tol_first=args.tol_first,
        tol_second=args.tol_second,
        grid=args.grid,
        random=args.random,
        seed=args.seed,
        allow_degenerate_angles=args.allow_degenerate_angles,
        flip_warp=args.flip_warp,
        flip_lee=args.flip_lee,
        skip_fraction=args.skip_fraction,
    )
    try:
        scenario = builtin(args.builtin) if args.builtin else load_scenario(args.scenario)
        report, code = run(args.command, scenario, ov)
    except (ScenarioError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    text = emit(report, args.format)
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return code
