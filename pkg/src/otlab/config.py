"""Run configuration: JSON schema, dataclass view and provenance hashing."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import jsonschema

from .costs import CostSpec
from .dual import SolverOptions
from .errors import ConfigError
from .measures import DiscreteMeasure, SourceQuadrature, make_discrete, sample_source

EXPERIMENTS = ("solve", "stability-pot", "stability-map", "verify", "bench")

_NUM_LIST = {"type": "array", "items": {"type": "number"}}

SCHEMA: Dict[str, Any] = {
    "type": "object",
    "required": ["source", "cost", "experiment"],
    "additionalProperties": False,
    "properties": {
        "source": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["uniform-box", "uniform-ball", "truncated-gaussian"]},
                "d": {"type": "integer", "minimum": 1, "maximum": 3},
                "m": {"type": "integer", "minimum": 1},
                "quadrature": {"enum": ["grid-1d", "grid-tensor", "monte-carlo"]},
                "params": {"type": "object"},
            },
        },
        "targets": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "points": {"type": "array", "minItems": 1, "items": _NUM_LIST},
                "weights": _NUM_LIST,
                "sigma": _NUM_LIST,
                "family": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "kinds": {"type": "array", "items": {"enum": ["location", "mass", "jitter"]}},
                        "levels": {"type": "integer", "minimum": 0},
                        "delta": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
            },
        },
        "cost": {
            "type": "object",
            "required": ["p"],
            "additionalProperties": False,
            "properties": {
                "p": {"type": "number", "exclusiveMinimum": 1},
                "scale": {"enum": ["one_over_p", "unit"]},
                "variant": {"enum": ["power", "linear_ell", "shifted", "boundary"]},
                "gamma": {"type": "number"},
                "omega": {
                    "type": "object",
                    "required": ["lo", "hi"],
                    "properties": {"lo": _NUM_LIST, "hi": _NUM_LIST},
                },
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "method": {"enum": ["newton", "gradient-ascent"]},
                "tol_marginal": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "line_search": {"enum": ["backtracking", "none"]},
                "eps0": {"type": "number", "exclusiveMinimum": 0},
                "factor": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eps_min": {"type": "number", "exclusiveMinimum": 0},
                "levels": {"type": "integer", "minimum": 0},
            },
        },
        "verify": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "suites": {"type": "array", "items": {"type": "string"}},
                "gamma_scale": {"type": "number", "exclusiveMinimum": 0},
                "trials": {"type": "integer", "minimum": 1},
            },
        },
        "experiment": {"enum": list(EXPERIMENTS)},
        "output_dir": {"type": "string"},
        "seed": {"type": "integer", "minimum": 0},
    },
}

DEFAULT_TARGETS = {"points": [[0.15], [0.4], [0.6], [0.85]], "weights": [0.3, 0.2, 0.25, 0.25]}
DEFAULT_FAMILY = {"kinds": ["location", "mass", "jitter"], "levels": 6, "delta": 0.1}


@dataclass
class RunConfig:
    source: Dict[str, Any]
    cost: CostSpec
    experiment: str
    targets: Dict[str, Any] = field(default_factory=lambda: dict(DEFAULT_TARGETS))
    solver: SolverOptions = field(default_factory=SolverOptions)
    verify: Dict[str, Any] = field(default_factory=dict)
    output_dir: str = "out"
    seed: int = 0
    raw: Dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def family(self) -> Dict[str, Any]:
        return {**DEFAULT_FAMILY, **self.targets.get("family", {})}

    def quadrature(self) -> SourceQuadrature:
        s = self.source
        return sample_source(s["kind"], s.get("d", 1), s.get("m", 2048), s.get("params"), self.seed, s.get("quadrature"))

    def target_measure(self) -> DiscreteMeasure:
        t = self.targets
        return make_discrete(t["points"], t.get("weights"), t.get("sigma"))

    def config_hash(self) -> str:
        canon = json.dumps({**self.raw, "seed": self.seed}, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()


def parse_config(data: Dict[str, Any], seed: Optional[int] = None, output_dir: Optional[str] = None) -> RunConfig:
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from None
    try:
        cost = CostSpec.from_dict(data["cost"])
        solver = SolverOptions(**data.get("solver", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    targets = data.get("targets") or dict(DEFAULT_TARGETS)
    if "points" not in targets:
        targets = {**DEFAULT_TARGETS, **targets}
    cfg = RunConfig(
        source=data["source"],
        cost=cost,
        experiment=data["experiment"],
        targets=targets,
        solver=solver,
        verify=data.get("verify", {}),
        output_dir=output_dir or data.get("output_dir", "out"),
        seed=data.get("seed", 0) if seed is None else seed,
        raw=data,
    )
    return cfg


def load_config(path, seed: Optional[int] = None, output_dir: Optional[str] = None) -> RunConfig:
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return parse_config(data, seed, output_dir)
