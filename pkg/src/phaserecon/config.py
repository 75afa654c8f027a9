"""Experiment configuration: JSON schema, loading and model assembly."""

from __future__ import annotations

import json
from pathlib import Path

import jsonschema

from .errors import ConfigError

__all__ = ["load_config", "validate_config", "SCHEMAS"]

_POS_INT = {"type": "integer", "minimum": 1}
_NONNEG = {"type": "number", "minimum": 0}

_PHANTOM = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind", "shape", "phase_range"],
    "properties": {
        "kind": {"enum": ["pf-brain-like", "waterfat-2compartment",
                          "flow-tube"]},
        "shape": {"type": "array", "items": _POS_INT, "minItems": 2,
                  "maxItems": 3},
        "phase_range": _NONNEG,
        "field_range_hz": _NONNEG,
    },
}

_SAMPLING = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "poisson": {
            "type": "object",
            "additionalProperties": False,
            "required": ["accel", "calib"],
            "properties": {"accel": {"type": "number", "minimum": 1},
                           "calib": {"type": "integer", "minimum": 0}},
        },
        "partial_fourier": {
            "type": "object",
            "additionalProperties": False,
            "required": ["fraction"],
            "properties": {"fraction": {"type": "number",
                                        "exclusiveMinimum": 0, "maximum": 1},
                           "axis": {"type": "integer", "minimum": 0}},
        },
    },
}

_MODEL = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["partial_fourier", "water_fat", "flow"]},
        "echo_times_s": {"type": "array", "items": {"type": "number"},
                         "minItems": 2},
        "fat_peaks": {"type": "array", "minItems": 1,
                      "items": {"type": "array", "minItems": 2, "maxItems": 2,
                                "items": {"type": "number"}}},
        "encoding_matrix": {"type": "array", "minItems": 4,
                            "items": {"type": "array", "minItems": 4,
                                      "maxItems": 4,
                                      "items": {"type": "number"}}},
        "venc_rad_per_unit": {"type": "number", "exclusiveMinimum": 0},
    },
}

_REG = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kind"],
    "properties": {
        "kind": {"enum": ["none", "l1-wavelet", "l2", "divfree"]},
        "lam": _NONNEG,
        "family": {"enum": ["daub4", "daub6"]},
        "levels": _POS_INT,
    },
}

_SOLVER = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "outer_iters": _POS_INT,
        "inner_iters": _POS_INT,
        "wrap_count": _POS_INT,
        "wrap_kind": {"enum": ["constant", "from-init"]},
        "step_safety": {"type": "number", "exclusiveMinimum": 0},
        "record_history": {"type": "boolean"},
        "init": {"enum": ["zero-filled", "truth-phase"]},
    },
}

_INPUTS = {
    "type": "object",
    "additionalProperties": False,
    "required": ["kspace", "masks", "maps"],
    "properties": {
        "kspace": {"type": "string"},
        "masks": {"type": "string"},
        "maps": {"type": "string"},
        "truth_magnitude": {"type": "string"},
        "truth_phase": {"type": "string"},
    },
}

_GRID = {
    "type": "object",
    "additionalProperties": False,
    "required": ["lam_m_grid", "lam_p_grid"],
    "properties": {
        "lam_m_grid": {"type": "array", "items": _NONNEG, "minItems": 1},
        "lam_p_grid": {"type": "array", "items": _NONNEG, "minItems": 1},
        "lam_m_fixed": _NONNEG,
    },
}

SCHEMAS = {
    "simulate": {
        "type": "object",
        "additionalProperties": False,
        "required": ["seed", "out", "phantom", "coils", "model"],
        "properties": {
            "seed": {"type": "integer", "minimum": 0},
            "out": {"type": "string"},
            "phantom": _PHANTOM,
            "coils": _POS_INT,
            "sampling": _SAMPLING,
            "noise_sigma": _NONNEG,
            "model": _MODEL,
        },
    },
    "reconstruct": {
        "type": "object",
        "additionalProperties": False,
        "required": ["seed", "out", "model", "regularizers", "solver",
                     "inputs"],
        "properties": {
            "seed": {"type": "integer", "minimum": 0},
            "out": {"type": "string"},
            "model": _MODEL,
            "regularizers": {
                "type": "object",
                "additionalProperties": False,
                "required": ["magnitude", "phase"],
                "properties": {"magnitude": _REG, "phase": _REG},
            },
            "solver": _SOLVER,
            "inputs": _INPUTS,
        },
    },
    "gridsearch": None,  # filled in below from the reconstruct schema
}

_grid_schema = json.loads(json.dumps(SCHEMAS["reconstruct"]))
_grid_schema["required"] = _grid_schema["required"] + ["gridsearch", "truth"]
_grid_schema["properties"]["gridsearch"] = _GRID
_grid_schema["properties"]["truth"] = {"type": "string"}
SCHEMAS["gridsearch"] = _grid_schema


def validate_config(cfg: dict, command: str) -> dict:
    """Schema-validate a config dict for one subcommand.

    Unknown keys are rejected.  Raises ConfigError with the validator's
    diagnostics on failure.
    """
    schema = SCHEMAS.get(command)
    if schema is None:
        raise ConfigError(f"no schema for command {command!r}")
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {where}: {exc.message}") from exc
    _cross_checks(cfg, command)
    return cfg


def _cross_checks(cfg, command):
    model = cfg.get("model", {})
    kind = model.get("kind")
    if kind == "water_fat":
        if "echo_times_s" not in model or "fat_peaks" not in model:
            raise ConfigError(
                "water_fat model requires echo_times_s and fat_peaks")
    if command == "simulate":
        pk = cfg["phantom"]["kind"]
        compatible = {
            "pf-brain-like": "partial_fourier",
            "waterfat-2compartment": "water_fat",
            "flow-tube": "flow",
        }
        if compatible[pk] != kind:
            raise ConfigError(
                f"phantom kind {pk!r} requires model kind "
                f"{compatible[pk]!r}, got {kind!r}")
        if pk == "flow-tube" and len(cfg["phantom"]["shape"]) != 3:
            raise ConfigError("flow-tube phantom requires a 3-D shape")


def load_config(path, command: str) -> dict:
    """Load and validate a JSON config file for one subcommand."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    return validate_config(cfg, command)
