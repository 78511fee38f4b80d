"""Check records, report assembly and serialization (json, csv, text)."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

__all__ = ["CheckResult", "PointResult", "CheckReport", "emit", "report_from_json"]


@dataclass(frozen=True)
class CheckResult:
    """One residual against one gate.

    ``gating=False`` marks classification records (for instance "are the
    leaves of D2 totally geodesic?") whose truth value is reported but does
    not decide the exit code.
    """

    check: str
    residual: float
    gate: float
    gating: bool = True

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.gate)


def gate(check: str, residual: float, tol: float, gating: bool = True) -> CheckResult:
    r = float(residual)
    if math.isnan(r):
        r = math.inf
    return CheckResult(check, r, float(tol), gating)


@dataclass
class PointResult:
    index: int
    u: tuple[float, ...]
    checks: list[CheckResult] = field(default_factory=list)
    values: dict[str, float] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)


@dataclass
class CheckReport:
    command: str
    param_names: tuple[str, ...]
    points: list[PointResult] = field(default_factory=list)
    requested: int = 0
    skipped: int = 0
    degenerate: int = 0
    warnings: list[str] = field(default_factory=list)
    provenance: dict[str, Any] = field(default_factory=dict)

    def records(self) -> list[tuple[PointResult, CheckResult]]:
        out = []
        for p in sorted(self.points, key=lambda q: q.index):
            for c in sorted(p.checks, key=lambda c: c.check):
                out.append((p, c))
        return out

    def summary(self) -> dict[str, Any]:
        per_check: dict[str, dict[str, Any]] = {}
        for _, c in self.records():
            s = per_check.setdefault(
                c.check,
                {"max_residual": 0.0, "gate": c.gate, "passed": 0, "failed": 0, "gating": c.gating},
            )
            s["max_residual"] = max(s["max_residual"], c.residual)
            s["passed" if c.passed else "failed"] += 1
        failures = sum(
            1 for _, c in self.records() if c.gating and not c.passed
        )
        return {
            "requested": self.requested,
            "admitted": len(self.points),
            "skipped": self.skipped,
            "degenerate": self.degenerate,
            "gating_failures": failures,
            "checks": dict(sorted(per_check.items())),
        }

    @property
    def all_passed(self) -> bool:
        return self.summary()["gating_failures"] == 0

    def results(self, check: str) -> list[CheckResult]:
        return [c for _, c in self.records() if c.check == check]

    def to_dict(self) -> dict[str, Any]:
        return {
            "command": self.command,
            "provenance": self.provenance,
            "param_names": list(self.param_names),
            "summary": self.summary(),
            "warnings": list(self.warnings),
            "points": [
                {
                    "index": p.index,
                    "u": list(p.u),
                    "values": dict(sorted(p.values.items())),
                    "notes": list(p.notes),
                    "checks": [
                        {
                            "check": c.check,
                            "residual": c.residual,
                            "gate": c.gate,
                            "pass": c.passed,
                            "gating": c.gating,
                        }
                        for c in sorted(p.checks, key=lambda c: c.check)
                    ],
                }
                for p in sorted(self.points, key=lambda q: q.index)
            ],
        }


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def _fmt_float(x: float, digits: int) -> str:
    if math.isnan(x):
        return '"nan"'
    if math.isinf(x):
        return '"inf"' if x > 0 else '"-inf"'
    s = f"{x:.{digits}g}"
    if not any(ch in s for ch in ".en"):
        s += ".0"
    return s


def _canonical_json(obj: Any, indent: int = 0) -> str:
    pad = "  " * indent
    inner = "  " * (indent + 1)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, float):
        return _fmt_float(obj, 17)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{inner}{json.dumps(str(k))}: {_canonical_json(v, indent + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in obj):
            return "[" + ", ".join(_canonical_json(v) for v in obj) + "]"
        items = [inner + _canonical_json(v, indent + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _decode_special(obj: Any) -> Any:
    if isinstance(obj, str) and obj in ("nan", "inf", "-inf"):
        return float(obj)
    if isinstance(obj, dict):
        return {k: _decode_special(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode_special(v) for v in obj]
    return obj


def report_from_json(text: str) -> CheckReport:
    """Rebuild a report from its json serialization."""
    data = _decode_special(json.loads(text))
    summary = data.get("summary", {})
    rep = CheckReport(
        command=data["command"],
        param_names=tuple(data["param_names"]),
        requested=summary.get("requested", 0),
        skipped=summary.get("skipped", 0),
        degenerate=summary.get("degenerate", 0),
        warnings=list(data.get("warnings", [])),
        provenance=data.get("provenance", {}),
    )
    for p in data["points"]:
        rep.points.append(
            PointResult(
                index=p["index"],
                u=tuple(float(v) for v in p["u"]),
                checks=[
                    CheckResult(c["check"], float(c["residual"]), float(c["gate"]), c["gating"])
                    for c in p["checks"]
                ],
                values={k: float(v) for k, v in p["values"].items()},
                notes=list(p["notes"]),
            )
        )
    return rep


def _to_csv(report: CheckReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["point_index", *report.param_names, "check", "residual", "gate", "pass"])
    for p, c in report.records():
        writer.writerow(
            [
                p.index,
                *(_fmt_float(v, 17) for v in p.u),
                c.check,
                _fmt_float(c.residual, 17).strip('"'),
                _fmt_float(c.gate, 17),
                "true" if c.passed else "false",
            ]
        )
    return buf.getvalue()


def _to_text(report: CheckReport) -> str:
    s = report.summary()
    lines = [
        f"command: {report.command}",
        f"points: requested={s['requested']} admitted={s['admitted']} "
        f"skipped={s['skipped']} degenerate={s['degenerate']}",
    ]
    for w in report.warnings:
        lines.append(f"warning: {w}")
    if s["checks"]:
        width = max(len(k) for k in s["checks"])
        lines.append(f"{'check':<{width}}  {'max_residual':>13}  {'gate':>12}  pass/fail")
        for name, c in s["checks"].items():
            tag = "" if c["gating"] else "  (classification)"
            lines.append(
                f"{name:<{width}}  {_fmt_float(c['max_residual'], 6).strip(chr(34)):>13}  "
                f"{_fmt_float(c['gate'], 6):>12}  {c['passed']}/{c['failed']}{tag}"
            )
    value_names = sorted({k for p in report.points for k in p.values})
    if value_names:
        lines.append("")
        lines.append("  ".join(["point", *report.param_names, *value_names]))
        for p in sorted(report.points, key=lambda q: q.index):
            row = [str(p.index), *(f"{v:.6g}" for v in p.u)]
            row += [f"{p.values[k]:.6g}" if k in p.values else "-" for k in value_names]
            lines.append("  ".join(row))
    lines.append(f"result: {'PASS' if s['gating_failures'] == 0 else 'FAIL'} "
                 f"({s['gating_failures']} gating failures)")
    return "\n".join(lines) + "\n"


def emit(report: CheckReport, fmt: str = "json") -> str:
    if fmt == "json":
        return _canonical_json(report.to_dict()) + "\n"
    if fmt == "csv":
        return _to_csv(report)
    if fmt == "text":
        return _to_text(report)
    raise ValueError(f"unknown format {fmt!r}")


def merge(reports: Sequence[CheckReport], command: str) -> CheckReport:
    """Combine per-command reports over the same sample points."""
    first = reports[0]
    out = CheckReport(
        command=command,
        param_names=first.param_names,
        requested=first.requested,
        skipped=first.skipped,
        degenerate=max(r.degenerate for r in reports),
        provenance=first.provenance,
    )
    by_index: dict[int, PointResult] = {}
    for r in reports:
        out.warnings.extend(w for w in r.warnings if w not in out.warnings)
        for p in r.points:
            q = by_index.setdefault(p.index, PointResult(p.index, p.u))
            q.checks.extend(p.checks)
            q.values.update(p.values)
            q.notes.extend(n for n in p.notes if n not in q.notes)
    out.points = [by_index[k] for k in sorted(by_index)]
    return out


def iter_failures(report: CheckReport) -> Iterable[tuple[PointResult, CheckResult]]:
    return ((p, c) for p, c in report.records() if c.gating and not c.passed)
