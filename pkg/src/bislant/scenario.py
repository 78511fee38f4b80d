"""Scenario documents: schema validation, parsing and the shipped builtins."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from .ambient import AmbientSpace
from .exprlang import ExprError, parse
from .immersion import Chart
from .numerics import ToleranceProfile
from .slant import DistributionSplit
from .warped import WarpDeclaration

__all__ = ["ScenarioError", "Scenario", "Samples", "load_scenario", "scenario_from_dict", "builtin", "builtin_document", "BUILTINS"]

BUILTINS = ("kahler-product", "paper-example", "paper-example-kahler")

_EXPR = {"type": "string", "minLength": 1}
_RANGE = {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["ambient", "chart", "split"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "ambient": {
            "type": "object",
            "required": ["n"],
            "additionalProperties": False,
            "properties": {
                "n": {"type": "integer", "minimum": 1, "maximum": 8},
                "sigma": _EXPR,
                "description": {"type": "string"},
            },
        },
        "chart": {
            "type": "object",
            "required": ["params", "components"],
            "additionalProperties": False,
            "properties": {
                "params": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "components": {"type": "array", "items": _EXPR, "minItems": 2},
                "domain_guard": {"anyOf": [_EXPR, {"type": "array", "items": _EXPR}]},
                "description": {"type": "string"},
            },
        },
        "split": {
            "type": "object",
            "required": ["I1", "I2"],
            "additionalProperties": False,
            "properties": {
                "I1": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "I2": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "declared_cos2_theta1": _EXPR,
                "declared_cos2_theta2": _EXPR,
                "description": {"type": "string"},
            },
        },
        "warp": {
            "type": "object",
            "required": ["lambda"],
            "additionalProperties": False,
            "properties": {"lambda": _EXPR, "description": {"type": "string"}},
        },
        "samples": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "mode": {"enum": ["grid", "random"]},
                "ranges": {"type": "object", "additionalProperties": _RANGE},
                "counts": {
                    "anyOf": [
                        {"type": "integer", "minimum": 1},
                        {"type": "object", "additionalProperties": {"type": "integer", "minimum": 1}},
                    ]
                },
                "count": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "description": {"type": "string"},
            },
        },
        "tolerances": {
            "type": "object",
            "additionalProperties": False,
            "properties": {k: {"type": "number", "exclusiveMinimum": 0} for k in ToleranceProfile().as_dict()},
        },
    },
}


class ScenarioError(ValueError):
    """Invalid scenario document; ``path`` is the dotted location of the fault."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


@dataclass
class Samples:
    mode: str
    ranges: dict[str, tuple[float, float]]
    counts: dict[str, int]
    count: int
    seed: int

    def points(self, params) -> list[np.ndarray]:
        """Requested sample points, in deterministic order."""
        if self.mode == "grid":
            axes = [np.linspace(*self.ranges[p], self.counts[p]) for p in params]
            mesh = np.meshgrid(*axes, indexing="ij")
            return [np.array(row) for row in np.stack([m.ravel() for m in mesh], axis=1)]
        rng = np.random.default_rng(self.seed)
        lo = np.array([self.ranges[p][0] for p in params])
        hi = np.array([self.ranges[p][1] for p in params])
        return [lo + (hi - lo) * rng.random(len(params)) for _ in range(self.count)]


@dataclass
class Scenario:
    name: str
    document: dict[str, Any]
    space: AmbientSpace
    chart: Chart
    split: DistributionSplit
    warp: WarpDeclaration | None
    samples: Samples
    profile: ToleranceProfile = field(default_factory=ToleranceProfile)

    @property
    def digest(self) -> str:
        text = json.dumps(self.document, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


def _path(parts) -> str:
    return ".".join(str(p) for p in parts)


def _validate(doc: Any) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if not errors:
        return
    err = errors[0]
    parts = list(err.absolute_path)
    if err.validator == "required":
        missing = err.message.split("'")[1]
        parts.append(missing)
        raise ScenarioError(_path(parts), "required field is missing")
    raise ScenarioError(_path(parts), err.message)


def _expr(src: str, variables, where: str):
    try:
        return parse(src, variables)
    except ExprError as exc:
        raise ScenarioError(where, str(exc)) from exc


def scenario_from_dict(doc: dict[str, Any]) -> Scenario:
    _validate(doc)
    amb, ch, sp = doc["ambient"], doc["chart"], doc["split"]
    n = amb["n"]
    params = list(ch["params"])
    if len(set(params)) != len(params):
        raise ScenarioError("chart.params", "parameter names must be distinct")
    if len(ch["components"]) != 2 * n:
        raise ScenarioError("chart.components", f"expected {2 * n} components for n={n}, got {len(ch['components'])}")
    try:
        space = AmbientSpace.from_source(n, amb.get("sigma", "0"))
    except ExprError as exc:
        raise ScenarioError("ambient.sigma", str(exc)) from exc
    for k, src in enumerate(ch["components"]):
        _expr(src, params, f"chart.components.{k}")
    guards = ch.get("domain_guard") or []
    if isinstance(guards, str):
        guards = [guards]
    for k, src in enumerate(guards):
        _expr(src, params, f"chart.domain_guard.{k}")
    chart = Chart.from_sources(ch["components"], params, guards)

    m = len(params)
    I1 = tuple(i - 1 for i in sp["I1"])
    I2 = tuple(i - 1 for i in sp["I2"])
    if max(I1 + I2) >= m:
        raise ScenarioError("split", f"indices must lie in 1..{m}")
    if sorted(I1 + I2) != list(range(m)):
        raise ScenarioError("split", "I1 and I2 must be disjoint and cover every parameter")
    for key, idx in (("I1", I1), ("I2", I2)):
        if len(idx) % 2:
            raise ScenarioError(f"split.{key}", f"odd cardinality {len(idx)}: a slant distribution has even real dimension")
    declared = [
        _expr(sp[k], params, f"split.{k}") if k in sp else None
        for k in ("declared_cos2_theta1", "declared_cos2_theta2")
    ]
    split = DistributionSplit(I1, I2, *declared)

    warp = None
    if "warp" in doc:
        _expr(doc["warp"]["lambda"], params, "warp.lambda")
        try:
            warp = WarpDeclaration.from_source(doc["warp"]["lambda"], params, split)
        except ValueError as exc:
            raise ScenarioError("warp.lambda", str(exc)) from exc

    s = doc.get("samples", {})
    ranges = {}
    for p in params:
        lo, hi = s.get("ranges", {}).get(p, (-1.0, 1.0))
        if not lo <= hi:
            raise ScenarioError(f"samples.ranges.{p}", "lower bound exceeds upper bound")
        ranges[p] = (float(lo), float(hi))
    unknown = set(s.get("ranges", {})) - set(params)
    if unknown:
        raise ScenarioError("samples.ranges", f"unknown parameter(s) {', '.join(sorted(unknown))}")
    counts = s.get("counts", 3)
    counts = {p: int(counts.get(p, 3)) for p in params} if isinstance(counts, dict) else {p: int(counts) for p in params}
    samples = Samples(s.get("mode", "grid"), ranges, counts, int(s.get("count", 20)), int(s.get("seed", 0)))

    try:
        profile = ToleranceProfile(**doc.get("tolerances", {}))
    except (TypeError, ValueError) as exc:
        raise ScenarioError("tolerances", str(exc)) from exc
    return Scenario(doc.get("name", "scenario"), doc, space, chart, split, warp, samples, profile)


def load_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError("", f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError("", f"{path} is not valid JSON: {exc}") from exc
    return scenario_from_dict(doc)


def builtin_document(name: str) -> dict[str, Any]:
    if name not in BUILTINS:
        raise ScenarioError("", f"unknown builtin {name!r}; choose from {', '.join(BUILTINS)}")
    return json.loads(resources.files("bislant.scenarios").joinpath(f"{name}.json").read_text())


def builtin(name: str) -> Scenario:
    return scenario_from_dict(builtin_document(name))
