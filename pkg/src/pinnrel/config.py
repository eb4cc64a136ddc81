"""Run configuration: hierarchical JSON, schema-validated, unknown keys rejected.

A run config names the benchmark, optional constant overrides, the training
setup, and estimator/sweep settings.  Everything random is seeded from here so
reruns are bit-reproducible.
"""

from __future__ import annotations

import hashlib
import json

import jsonschema

from .problems import (
    BurgersConstants,
    CascadeConstants,
    DecayConstants,
    burgers_problem,
    cascade_problem,
    decay_problem,
)
from .training import TrainConfig

__all__ = [
    "ConfigError",
    "load_config",
    "validate_config",
    "config_hash",
    "problem_from_config",
    "train_config_from_config",
    "SCHEMA",
]


class ConfigError(Exception):
    """Invalid run configuration; message carries the JSON path."""


_TRAIN_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "hidden_layers": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
            "minItems": 1,
        },
        "n_collocation": {"type": "integer", "minimum": 1},
        "lhs_seed": {"type": "integer", "minimum": 0},
        "init_seed": {"type": "integer", "minimum": 0},
        "rmsprop_iters": {"type": "integer", "minimum": 0},
        "rmsprop_lr": {"type": "number", "exclusiveMinimum": 0},
        "rmsprop_rho": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "rmsprop_eps": {"type": "number", "exclusiveMinimum": 0},
        "lbfgs_max_iters": {"type": "integer", "minimum": 0},
        "lbfgs_memory": {"type": "integer", "minimum": 1},
        "wolfe_c1": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "wolfe_c2": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "grad_tol": {"type": "number", "exclusiveMinimum": 0},
        "loss_tol": {"type": "number", "exclusiveMinimum": 0},
        "mode": {"enum": ["hard", "soft"]},
        "n_boundary": {"type": "integer", "minimum": 0},
        "n_initial": {"type": "integer", "minimum": 0},
        "history_every": {"type": "integer", "minimum": 1},
    },
}

_CONSTANTS_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        # decay
        "u0": {"type": "number"},
        "u_d": {"type": "number"},
        # burgers
        "nu": {"type": "number", "exclusiveMinimum": 0},
        "e": {"type": "number", "exclusiveMinimum": 0},
        "z0": {"type": "number"},
        # cascade
        "nominal_rates": {
            "type": "array",
            "items": {"type": "number", "exclusiveMinimum": 0},
            "minItems": 6,
            "maxItems": 6,
        },
        "e3p0": {"type": "number"},
        "sigma_v": {"type": "number"},
        "km": {"type": "number", "exclusiveMinimum": 0},
        "g4": {"type": "number"},
        "drive": {"type": "number"},
        "t_horizon": {"type": "number", "exclusiveMinimum": 0},
        # shared
        "t_eval": {"type": "number", "exclusiveMinimum": 0},
    },
}

_ESTIMATE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "method": {"enum": ["mcs", "form", "is", "ss"]},
        "n_samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "p0": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "n_per_level": {"type": "integer", "minimum": 10},
        "threshold": {"type": "number"},
        "time": {"type": "number", "exclusiveMinimum": 0},
        "reference_beta": {"type": "number"},
    },
    "required": ["method"],
}

_SWEEP_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": ["threshold", "time"]},
        "values": {"type": "array", "items": {"type": "number"}, "minItems": 1},
        "n_samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["kind", "values"],
}

_ORACLE_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "n_samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "nx": {"type": "integer", "minimum": 11},
        "dt": {"type": "number", "exclusiveMinimum": 0},
        "threshold": {"type": "number"},
        "time": {"type": "number", "exclusiveMinimum": 0},
    },
}

_BENCHMARK_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "table": {"enum": ["architecture", "collocation"]},
        "layers": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "neurons": {"type": "array", "items": {"type": "integer", "minimum": 1}},
        "collocation_counts": {
            "type": "array",
            "items": {"type": "integer", "minimum": 1},
        },
        "n_samples": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
    },
    "required": ["table"],
}

SCHEMA = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "benchmark": {"enum": ["decay", "burgers", "cascade"]},
        "output_dir": {"type": "string"},
        "train": _TRAIN_SCHEMA,
        "constants": _CONSTANTS_SCHEMA,
        "estimate": _ESTIMATE_SCHEMA,
        "sweep": _SWEEP_SCHEMA,
        "oracle": _ORACLE_SCHEMA,
        "tables": _BENCHMARK_SCHEMA,
    },
    "required": ["benchmark"],
}

_CONSTANT_KEYS = {
    "decay": {"u0", "u_d", "t_eval"},
    "burgers": {"nu", "e", "z0", "t_eval"},
    "cascade": {
        "nominal_rates",
        "e3p0",
        "sigma_v",
        "km",
        "g4",
        "drive",
        "t_eval",
        "t_horizon",
    },
}


def validate_config(cfg):
    """Schema- and cross-field-validate a parsed config dict; returns it."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from exc
    benchmark = cfg["benchmark"]
    allowed = _CONSTANT_KEYS[benchmark]
    for key in cfg.get("constants", {}):
        if key not in allowed:
            raise ConfigError(
                f"config invalid at constants/{key}: "
                f"not a {benchmark} constant (allowed: {sorted(allowed)})"
            )
    if benchmark == "cascade":
        consts = cfg.get("constants", {})
        for required in ("nominal_rates", "e3p0"):
            if required not in consts:
                raise ConfigError(
                    f"config invalid at constants: cascade requires '{required}'"
                )
    return cfg


def load_config(path):
    """Parse and validate a JSON config file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return validate_config(cfg)


def config_hash(cfg):
    """Content hash of a config dict (key order independent)."""
    canon = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()


def problem_from_config(cfg):
    """Build the BenchmarkProblem named by the config, with overrides applied."""
    overrides = dict(cfg.get("constants", {}))
    benchmark = cfg["benchmark"]
    if benchmark == "decay":
        return decay_problem(DecayConstants(**overrides))
    if benchmark == "burgers":
        return burgers_problem(BurgersConstants(**overrides))
    overrides["nominal_rates"] = tuple(overrides["nominal_rates"])
    return cascade_problem(CascadeConstants(**overrides))


def train_config_from_config(cfg):
    section = dict(cfg.get("train", {}))
    if "hidden_layers" in section:
        section["hidden_layers"] = tuple(section["hidden_layers"])
    return TrainConfig(**section)
