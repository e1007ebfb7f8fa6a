"""Run configuration: a single JSON document validated against ``CONFIG_SCHEMA``."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import jsonschema

from .blackbox import TrueModel
from .errors import ConfigInvalid
from .estimator import SamplingPlan

_VEC3 = {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3}
_NUM_LIST = {"type": "array", "items": {"type": "number"}, "minItems": 1}

CONFIG_SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "qidkit run configuration",
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "schema_version": {"const": 1},
        "model": {
            "type": "object",
            "additionalProperties": False,
            "required": ["d0"],
            "properties": {
                "d0": _VEC3,
                "controls": {"type": "array", "items": _VEC3},
            },
        },
        "field_grid": {"type": "array", "items": _NUM_LIST},
        "plan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "coarse_samples": {"type": "integer"},
                "omega_max": {"type": "number"},
                "coarse_span": {"type": ["number", "null"]},
                "refine_points": {"type": "integer"},
                "refine_window": {"type": "array", "items": {"type": "number"},
                                  "minItems": 2, "maxItems": 2},
                "phi_coarse_step": {"type": "number"},
                "force_reference_d0": {"type": "boolean"},
                "floor_factor": {"type": "number"},
                "crossing_threshold": {"type": "number"},
                "crossing_persist": {"type": "integer"},
                "normalize_contrast": {"type": "boolean"},
                "d0_source": {"enum": ["direct", "intercept"]},
            },
        },
        "noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "eta": {"type": "number"},
                "shots": {"type": "integer"},
            },
        },
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "mode": {"enum": ["exact", "sampled"]},
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "seeds": {"type": "array", "items": {"type": "integer", "minimum": 0}, "minItems": 1},
                "shots": {"type": "array", "items": {"type": "integer"}, "minItems": 1},
                "eta": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
        },
    },
}

DEFAULT_GRID = tuple(round(0.05 * k, 10) for k in range(1, 11))


@dataclass(frozen=True)
class SweepSpec:
    seeds: tuple[int, ...]
    shots: tuple[int, ...]
    eta: tuple[float, ...]

    def cells(self):
        """(seed, shots, eta) in deterministic row order."""
        return [(s, n, e) for s in self.seeds for n in self.shots for e in self.eta]


@dataclass(frozen=True)
class RunConfig:
    model: TrueModel
    field_grid: tuple[tuple[float, ...], ...]
    plan: SamplingPlan
    seed: int = 0
    mode: str = "sampled"
    sweep: SweepSpec | None = None
    document: dict = field(default_factory=dict, compare=False)

    def with_overrides(self, *, mode: str | None = None, seed: int | None = None,
                       shots: int | None = None, eta: float | None = None,
                       keep_raw: bool | None = None) -> "RunConfig":
        mode = mode or self.mode
        plan = replace(
            self.plan,
            exact=(mode == "exact"),
            shots=self.plan.shots if shots is None else shots,
            eta=self.plan.eta if eta is None else eta,
            keep_raw=self.plan.keep_raw if keep_raw is None else keep_raw,
        )
        return replace(self, plan=plan, mode=mode, seed=self.seed if seed is None else seed)

    def echo(self) -> dict:
        """Normalized, fully explicit configuration for reports."""
        p = self.plan
        out = {
            "model": {"d0": list(map(float, self.model.d0)),
                      "controls": [list(map(float, c)) for c in self.model.controls]},
            "field_grid": [list(g) for g in self.field_grid],
            "plan": {
                "coarse_samples": p.coarse_samples, "omega_max": p.omega_max,
                "coarse_span": p.coarse_span, "refine_points": p.refine_points,
                "refine_window": list(p.refine_window), "phi_coarse_step": p.phi_coarse_step,
                "force_reference_d0": p.force_reference_d0, "floor_factor": p.floor_factor,
                "crossing_threshold": p.crossing_threshold, "crossing_persist": p.crossing_persist,
                "normalize_contrast": p.normalize_contrast, "d0_source": p.d0_source,
            },
            "noise": {"eta": p.eta, "shots": p.shots},
            "seed": self.seed,
            "mode": self.mode,
        }
        if self.sweep is not None:
            out["sweep"] = {"seeds": list(self.sweep.seeds), "shots": list(self.sweep.shots),
                            "eta": list(self.sweep.eta)}
        return out


def parse_config(doc: Any) -> RunConfig:
    try:
        jsonschema.validate(doc, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None

    model = TrueModel(doc["model"]["d0"], doc["model"].get("controls", []))
    M = model.n_controls
    grid = doc.get("field_grid")
    if grid is None:
        grid = [list(DEFAULT_GRID)] * M
    if len(grid) != M:
        raise ConfigInvalid(f"field_grid has {len(grid)} rows for {M} controls")
    for m, g in enumerate(grid, start=1):
        if len(g) < 2:
            raise ConfigInvalid(f"field_grid[{m - 1}] needs L >= 2 values")
        if len(set(g)) < 2:
            raise ConfigInvalid(f"field_grid[{m - 1}] needs two distinct field values")

    noise = doc.get("noise", {})
    eta = noise.get("eta", 0.0)
    shots = noise.get("shots", 1000)
    _check_noise(eta, shots)
    mode = doc.get("mode", "sampled")

    plan_kw = dict(doc.get("plan", {}))
    if "refine_window" in plan_kw:
        plan_kw["refine_window"] = tuple(plan_kw["refine_window"])
    try:
        plan = SamplingPlan(shots=shots, eta=eta, exact=(mode == "exact"), **plan_kw)
    except ValueError as exc:
        raise ConfigInvalid(f"plan: {exc}") from None

    sweep = None
    if "sweep" in doc:
        s = doc["sweep"]
        sweep = SweepSpec(tuple(s.get("seeds", [doc.get("seed", 0)])),
                          tuple(s.get("shots", [shots])), tuple(s.get("eta", [eta])))
        for e in sweep.eta:
            for n in sweep.shots:
                _check_noise(e, n)

    return RunConfig(model, tuple(tuple(float(f) for f in g) for g in grid), plan,
                     doc.get("seed", 0), mode, sweep, doc)


def _check_noise(eta, shots):
    if not (isinstance(eta, (int, float)) and math.isfinite(eta) and 0.0 <= eta <= 1.0):
        raise ConfigInvalid(f"eta must lie in [0, 1], got {eta}")
    if shots < 1:
        raise ConfigInvalid(f"shots must be >= 1, got {shots}")


def load_config(path: str | Path) -> RunConfig:
    text = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"not valid JSON: {exc}") from None
    return parse_config(doc)
