"""Experiment configuration: TOML loading, schema validation and defaults."""

from __future__ import annotations

import copy
import hashlib
from pathlib import Path

import jsonschema

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

__all__ = ["SCHEMA_VERSION", "EXPERIMENTS", "SCHEMA", "DEFAULT_TOLERANCES", "ConfigError", "load_config", "validate", "config_hash"]

SCHEMA_VERSION = 1
EXPERIMENTS = ("homogenize", "degeneracy", "pde_convergence", "obstacle", "ergodic")

# acceptance tolerances; every one can be overridden in [tolerances]
DEFAULT_TOLERANCES = {
    "oracle_rel": 0.05,
    "band_nsigma": 3.0,
    "sandwich_rtol": 1e-6,
    "periodic_nsigma": 2.0,
    "convexity_nsigma": 3.0,
    "growth_factor": 2.0,
    "inactive_obstacle_atol": 1e-10,
    "complementarity": 1e-6,
    "uniqueness_rtol": 1e-8,
    "ergodic_nsigma": 3.0,
    "probe_trend_factor": 0.5,
    "probe_abs_tol": 0.05,
    "weak_residual": 1e-6,
}

_number = {"type": "number"}
_law = {
    "oneOf": [
        _number,
        {
            "type": "object",
            "properties": {
                "law": {"enum": ["constant", "discrete", "pareto", "inverse_pareto"]},
                "value": _number,
                "atoms": {"type": "array", "items": _number, "minItems": 1},
                "probs": {"type": "array", "items": _number, "minItems": 1},
                "alpha": {"type": "number", "exclusiveMinimum": 0},
                "scale": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["law"],
            "additionalProperties": False,
        },
    ]
}
_vec = {"type": "array", "items": _number, "minItems": 1}
# force / oscillation / boundary / obstacle descriptions
_source = {
    "type": "object",
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["zero", "constant", "sin_product", "sin", "affine"]},
        "value": _number,
        "amplitude": _number,
        "axis": {"type": "integer", "minimum": 0},
        "xi": _vec,
    },
    "additionalProperties": False,
}

SCHEMA = {
    "type": "object",
    "required": ["schema_version", "experiment", "base_seed"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "experiment": {"enum": list(EXPERIMENTS)},
        "name": {"type": "string"},
        "base_seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "field": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "laminate", "checkerboard", "heavy_tail_checkerboard", "custom"]},
                "d": {"type": "integer", "enum": [2, 3]},
                "diag_weights": {"oneOf": [_law, {"type": "array", "items": _law, "minItems": 1}]},
                "coupling": {"enum": ["isotropic", "independent"]},
                "lambda_law": _law,
                "shifted": {"type": "boolean"},
                "pattern": {"type": "array"},
                "lambda_pattern": {"type": "array"},
                "field_id": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "integrand": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["power", "perturbed"]},
                "p": {"type": "number", "exclusiveMinimum": 1},
                "m": {"type": "integer", "minimum": 1},
                "d": {"type": "integer", "enum": [2, 3]},
                "rho": {"type": "number", "minimum": 0, "maximum": 1},
                "regularization_delta": {"type": "number", "minimum": 0},
                "lambda_weight": {"type": "number", "minimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "schedule": {
            "type": "object",
            "required": ["t_values"],
            "properties": {
                "t_values": _vec,
                "seeds_per_t": {"type": "integer", "minimum": 1},
                "nodes_per_unit": {"type": "number", "exclusiveMinimum": 0},
                "n_per_t": {"type": "array", "items": {"type": "integer", "minimum": 1}},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "max_iters": {"type": "integer", "minimum": 1},
                "grad_tol": {"type": "number", "exclusiveMinimum": 0},
                "energy_tol": {"type": "number", "exclusiveMinimum": 0},
                "method": {"enum": ["auto", "cg", "first_order"]},
                "linear_solver": {"enum": ["auto", "jacobi", "amg", "direct"]},
                "continuation_deltas": _vec,
                "armijo_c": {"type": "number", "exclusiveMinimum": 0},
                "max_backtracks": {"type": "integer", "minimum": 1},
                "direct_max": {"type": "integer", "minimum": 0},
                "stall_iters": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "tolerances": {
            "type": "object",
            "properties": {k: {"type": "number", "minimum": 0} for k in DEFAULT_TOLERANCES},
            "additionalProperties": False,
        },
        "homogenize": {
            "type": "object",
            "properties": {
                "xis": {"type": "array", "items": _vec},
                "grid": _vec,
                "gradient_step": {"type": "number", "exclusiveMinimum": 0},
                "extrapolate": {"type": "boolean"},
                "periodic": {"type": "boolean"},
                "oracle_diag": _vec,
                "oracle_weights": _vec,
                "n_moment_samples": {"type": "integer", "minimum": 1},
                "uniqueness_check": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "degeneracy": {
            "type": "object",
            "properties": {
                "xi": _vec,
                "expected": {"enum": ["BlowUp", "Collapse", "Stable", "Unknown"]},
                "n_moment_samples": {"type": "integer", "minimum": 1},
            },
            "required": ["xi"],
            "additionalProperties": False,
        },
        "pde": {
            "type": "object",
            "properties": {
                "eps_list": _vec,
                "n_fine": {"type": "integer", "minimum": 2},
                "seeds": {"type": "integer", "minimum": 1},
                "force": _source,
                "oscillation": _source,
                "boundary": _source,
                "obstacle": _source,
                "law_diag": _vec,
                "control": {"type": "boolean"},
                "dump_fields": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "obstacle": {
            "type": "object",
            "properties": {
                "n": {"type": "integer", "minimum": 2},
                "force": _source,
                "inactive_level": _number,
                "active_level": _number,
                "dump_fields": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "ergodic": {
            "type": "object",
            "properties": {
                "observables": {"type": "array", "items": {"enum": ["A_p", "Ainv_pprime", "Lambda"]}},
                "p": {"type": "number", "exclusiveMinimum": 1},
                "average_eps": {"type": "number", "exclusiveMinimum": 0},
                "n_seeds": {"type": "integer", "minimum": 2},
                "probe_boxes": {"type": "integer", "minimum": 1},
                "probe_coverage": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "probe_seeds": {"type": "integer", "minimum": 1},
                "eps_list": _vec,
                "points_per_period": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ConfigError(ValueError):
    """Schema or semantic error in an experiment config."""


def validate(cfg: dict) -> dict:
    """Check ``cfg`` against the schema and fill tolerance defaults."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{where}: {exc.message}") from None
    out = copy.deepcopy(cfg)
    tol = dict(DEFAULT_TOLERANCES)
    tol.update(out.get("tolerances", {}))
    out["tolerances"] = tol
    exp = out["experiment"]
    needs = {
        "homogenize": ("field", "integrand", "schedule"),
        "degeneracy": ("field", "integrand", "schedule", "degeneracy"),
        "pde_convergence": ("field", "integrand", "pde"),
        "obstacle": ("integrand",),
        "ergodic": ("field",),
    }[exp]
    missing = [k for k in needs if k not in out]
    if missing:
        raise ConfigError(f"experiment {exp!r} needs tables {missing}")
    return out


def load_config(path) -> tuple[dict, bytes]:
    """Read and validate a TOML config; returns ``(config, raw_bytes)``."""
    raw = Path(path).read_bytes()
    try:
        cfg = tomllib.loads(raw.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    return validate(cfg), raw


def config_hash(raw: bytes) -> str:
    return hashlib.sha256(raw).hexdigest()
