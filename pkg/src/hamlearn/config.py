"""Experiment configuration: YAML file, strict schema, model construction."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import yaml

from .errors import ConfigError, FormatError
from .hierarchy import HierarchyConfig
from .models import (RYDBERG_SCHEDULE, CrosstalkSpec, RydbergParams, build_disordered_xy, build_rydberg_chain,
                     rydberg_scale, zxz_hamiltonian)
from .pauli import SparseHamiltonian
from .sim import EvolutionOracle, SpamModel

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_INT = {"type": "integer"}

_MODEL_PARAMS = {
    "disordered_xy": {
        "type": "object", "additionalProperties": False, "required": ["n"],
        "properties": {
            "n": {"type": "integer", "minimum": 3}, "seed": _INT,
            "crosstalk": {"type": "array", "items": {"type": "array", "items": _NUM, "minItems": 3, "maxItems": 3}},
            "all_to_all": _NUM, "j_range": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        },
    },
    "rydberg_chain": {
        "type": "object", "additionalProperties": False,
        "properties": {"atom_count": {"type": "integer", "minimum": 1}, "spacing": _POS, "c6": _POS,
                       "omega": _NUM, "delta": _NUM, "scale": _POS, "schedule": {"enum": ["builtin", "none"]}},
    },
    "zxz_blackbox": {
        "type": "object", "additionalProperties": False, "required": ["n"],
        "properties": {"n": {"type": "integer", "minimum": 3}, "theta": _POS,
                       "perturbation": _NUM, "seed": _INT},
    },
    "planted": {
        "type": "object", "additionalProperties": False, "required": ["terms"],
        "properties": {"terms": {"type": "object", "additionalProperties": _NUM,
                                 "propertyNames": {"pattern": "^[IXYZ]+$"}},
                       "step": _POS},
    },
}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["model"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "model": {
            "type": "object", "additionalProperties": False, "required": ["builder"],
            "properties": {"builder": {"enum": sorted(_MODEL_PARAMS)}, "params": {"type": "object"}},
        },
        "learner": {
            "type": "object", "additionalProperties": False,
            "properties": {
                "eps": {"type": "number", "exclusiveMinimum": 0}, "M_est": {"type": "integer", "minimum": 1},
                "structure_route": {"enum": ["two-copy", "single-copy"]},
                "shots_structure": {"type": "integer", "minimum": 1},
                "shots_coeff": {"type": ["integer", "null"], "minimum": 2},
                "spam": {"type": "number", "minimum": 0, "maximum": 1},
                "levels": {"type": "integer", "minimum": 1},
                "overrides": {
                    "type": "object", "propertyNames": {"pattern": "^[1-9][0-9]*$"},
                    "additionalProperties": {"type": "object", "additionalProperties": False,
                                             "required": ["T", "eps"], "properties": {"T": _POS, "eps": _POS}},
                },
                "C": {"type": "number", "minimum": 2}, "delta": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "coeff": {
            "type": "object", "additionalProperties": False, "required": ["pauli"],
            "properties": {"pauli": {"type": "string", "pattern": "^[IXYZ]+$"}, "eps": _POS},
        },
        "sweep": {
            "type": "object", "additionalProperties": False, "required": ["eps"],
            "properties": {
                "eps": {"type": "array", "items": _POS, "minItems": 1},
                "mode": {"enum": ["rfe", "hierarchy", "synthetic"]},
                "pauli": {"type": "string", "pattern": "^[IXYZ]+$"},
                "shots_budget": {"type": ["integer", "null"], "minimum": 2},
                "constant": _POS,
            },
        },
        "output": {
            "type": "object", "additionalProperties": False,
            "properties": {"dir": {"type": "string"}, "prefix": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"}},
        },
    },
}


@dataclass
class ExperimentConfig:
    builder: str
    params: dict
    learner: dict = field(default_factory=dict)
    coeff: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    out_dir: str = "out"
    prefix: str = "run"
    seed: int = 0
    source: str | None = None

    def with_overrides(self, seed=None, out_dir=None, route=None, spam=None) -> "ExperimentConfig":
        learner = dict(self.learner)
        if route is not None:
            learner["structure_route"] = route
        if spam is not None:
            learner["spam"] = spam
        return ExperimentConfig(self.builder, self.params, learner, self.coeff, self.sweep,
                                out_dir if out_dir is not None else self.out_dir, self.prefix,
                                seed if seed is not None else self.seed, self.source)


def validate(doc) -> None:
    try:
        jsonschema.validate(doc, SCHEMA)
        jsonschema.validate(doc["model"].get("params", {}), _MODEL_PARAMS[doc["model"]["builder"]])
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None


def parse_config(text: str, source: str | None = None) -> ExperimentConfig:
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise FormatError(f"cannot parse config: {exc}") from None
    validate(doc)
    out = doc.get("output", {})
    return ExperimentConfig(doc["model"]["builder"], dict(doc["model"].get("params", {})),
                            dict(doc.get("learner", {})), dict(doc.get("coeff", {})), dict(doc.get("sweep", {})),
                            out.get("dir", "out"), out.get("prefix", "run"), int(doc.get("seed", 0)), source)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    text = p.read_text(encoding="utf-8")      # OSError propagates to the caller
    return parse_config(text, str(p))


@dataclass
class BuiltModel:
    hamiltonian: SparseHamiltonian       # normalized, as seen by the learner
    oracle: EvolutionOracle
    scale: float = 1.0                   # physical coefficient = normalized * scale
    schedule: dict = field(default_factory=dict)   # physical-unit level overrides


def build_model(cfg: ExperimentConfig) -> BuiltModel:
    p = cfg.params
    if cfg.builder == "disordered_xy":
        ct = None
        if "crosstalk" in p or "all_to_all" in p:
            pairs = tuple((int(a), int(b), float(c)) for a, b, c in p.get("crosstalk", []))
            ct = CrosstalkSpec(pairs, float(p.get("all_to_all", 0.0)))
        else:
            ct = CrosstalkSpec()
        H = build_disordered_xy(p["n"], p.get("seed", 0), ct, tuple(p.get("j_range", (0.2, 1.0))))
        return BuiltModel(H, EvolutionOracle(H))
    if cfg.builder == "rydberg_chain":
        keys = ("atom_count", "spacing", "c6", "omega", "delta", "scale")
        rp = RydbergParams(**{k: p[k] for k in keys if k in p})
        H = build_rydberg_chain(rp)
        sched = dict(RYDBERG_SCHEDULE) if p.get("schedule", "builtin") == "builtin" else {}
        return BuiltModel(H, EvolutionOracle(H), rydberg_scale(rp), sched)
    if cfg.builder == "zxz_blackbox":
        H = zxz_hamiltonian(p["n"], p.get("perturbation", 0.0), p.get("seed"))
        return BuiltModel(H, EvolutionOracle(H, step=p.get("theta", 0.1)))
    if cfg.builder == "planted":
        H = SparseHamiltonian.from_labels(p["terms"])
        if H.max_abs() > 1:
            raise ConfigError("planted coefficients must satisfy |c| <= 1")
        return BuiltModel(H, EvolutionOracle(H, step=p.get("step")))
    raise ConfigError(f"unknown builder {cfg.builder!r}")


def hierarchy_config(cfg: ExperimentConfig, model: BuiltModel, workers: int = 1) -> HierarchyConfig:
    """Learner settings in the oracle's normalized units.

    eps and override values in the file are physical; times are multiplied
    and accuracies divided by the model scale.
    """
    L = cfg.learner
    s = model.scale
    overrides = {lvl: (T * s, e / s) for lvl, (T, e) in model.schedule.items()}
    for lvl, v in L.get("overrides", {}).items():
        overrides[int(lvl)] = (v["T"] * s, v["eps"] / s)
    if "levels" in L:
        overrides = {k: v for k, v in overrides.items() if k <= L["levels"]}
    eps = L.get("eps", 0.01) / s
    if not 0 < eps < 1:
        raise ConfigError(f"normalized eps {eps} outside (0, 1)")
    return HierarchyConfig(
        eps=eps, M_est=L.get("M_est", max(1, len(model.hamiltonian))),
        structure_route=L.get("structure_route", "two-copy"),
        shots_structure=L.get("shots_structure", 2000), shots_coeff=L.get("shots_coeff", 1000),
        spam=SpamModel(L.get("spam", 0.0)), seed=cfg.seed,
        levels=L.get("levels", max(overrides) if overrides else None),
        overrides=overrides, C=L.get("C", 4.0), delta=L.get("delta", 0.05), workers=workers)
