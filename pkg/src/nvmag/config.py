"""Run configuration: JSON documents with defaults, validated by JSON Schema."""

from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .constants import (
    BIAS_FIELD,
    I_REF,
    I_SIG,
    LOCKIN_SLOPES,
    R_SIG,
    STRAIN_MZ,
    ZFS_D,
)
from .errors import ConfigError

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_NONNEG = {"type": "number", "minimum": 0}


def _vec(n, item=_NUM):
    return {"type": "array", "items": item, "minItems": n, "maxItems": n}


_PARAMS = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "bias_field_t": _vec(3),
        "zfs_d_hz": _POS,
        "strain_mz_hz": _vec(4),
    },
    "required": ["bias_field_t"],
}

_LINE = {
    "type": "array",
    "prefixItems": [
        {"enum": ["lambda", "chi", "phi", "kappa"]},
        {"enum": ["-", "+"]},
    ],
    "items": False,
    "minItems": 2,
}

_ADDRESSED = {"type": "array", "items": _LINE, "minItems": 4, "maxItems": 4}

_CHANNEL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "line": _LINE,
        "carrier_hz": _POS,
        "mod_freq_hz": _POS,
        "deviation_hz": _NONNEG,
        "contrast": _NONNEG,
        "linewidth_hz": _POS,
    },
    "required": ["line", "carrier_hz", "mod_freq_hz", "deviation_hz"],
}

_COIL = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "axis": {"enum": ["x", "y", "z"]},
        "freq_hz": _NUM,
        "rms_t": _NONNEG,
        "phase_rad": _NUM,
    },
    "required": ["axis", "freq_hz", "rms_t"],
}

_SYNTH = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "sample_rate": _POS,
        "duration_s": _POS,
        "hyperfine_splitting_hz": _NONNEG,
        "i_sig_a": _POS,
        "i_ref_a": _POS,
        "r_sig_ohm": _POS,
        "r_ref_ohm": _POS,
        "noise": {"enum": ["none", "shot", "shot+laser"]},
        "rin_excess": _NONNEG,
        "lock_carriers": {"type": "boolean"},
        "pl_model": {"enum": ["sum", "product"]},
    },
}

_CHANNELS = {"oneOf": [{"const": "default"}, {"type": "array", "items": _CHANNEL, "minItems": 4, "maxItems": 4}]}
_COILS = {"oneOf": [{"enum": ["default", "none"]}, {"type": "array", "items": _COIL}]}
_SEED = {"type": "integer", "minimum": 0}

_REFERENCE_POINT = {
    "bias_field_t": BIAS_FIELD.tolist(),
    "zfs_d_hz": ZFS_D,
    "strain_mz_hz": STRAIN_MZ.tolist(),
}
_DEFAULT_ADDRESSED = [["lambda", "-"], ["chi", "-"], ["phi", "+"], ["kappa", "+"]]
_DEFAULT_SYNTH = {"duration_s": 1.0, "noise": "shot"}


def _obj(props, required=()):
    return {"type": "object", "additionalProperties": False, "properties": props, "required": list(required)}


SCHEMAS = {
    "fit-bias": _obj(
        {
            "seed": _SEED,
            "line_centers_hz": _vec(8, _POS),
            "input": {"type": "string"},
            "initial_guess": _PARAMS,
        }
    ),
    "linearize": _obj(
        {
            "seed": _SEED,
            "point": _PARAMS,
            "addressed": _ADDRESSED,
            "step_t": _POS,
        }
    ),
    "synth": _obj(
        {
            "seed": _SEED,
            "params": _PARAMS,
            "channels": _CHANNELS,
            "coils": _COILS,
            "synth": _SYNTH,
        }
    ),
    "demod": _obj(
        {
            "seed": _SEED,
            "input": {"type": "string"},
            "reference": {"type": ["string", "null"]},
            "slopes": {"oneOf": [{"type": "string"}, _vec(4, _NUM)]},
            "phases_rad": _vec(4),
            "channels": _CHANNELS,
            "settle_s": _NONNEG,
        },
        ["input", "slopes"],
    ),
    "reconstruct": _obj(
        {
            "seed": _SEED,
            "inputs": {"type": "array", "items": {"type": "string"}, "minItems": 4, "maxItems": 4},
            "matrix": {"type": "string"},
            "point": _PARAMS,
            "addressed": _ADDRESSED,
        },
        ["inputs"],
    ),
    "pipeline": _obj(
        {
            "seed": _SEED,
            "params": _PARAMS,
            "channels": _CHANNELS,
            "coils": _COILS,
            "synth": _SYNTH,
            "settle_s": _NONNEG,
            "cancel_laser_noise": {"type": "boolean"},
            "spectral_method": {"enum": ["periodogram", "welch"]},
            "write_streams": {"type": "boolean"},
        }
    ),
    "sensitivity": _obj(
        {
            "seed": _SEED,
            "slopes_v_per_hz": _vec(4, _NUM),
            "bandwidth_hz": _NONNEG,
            "i_sig_a": _POS,
            "i_ref_a": _POS,
            "r_sig_ohm": _POS,
            "include_reference": {"type": "boolean"},
            "matrix": {"enum": ["linearized", "reference"]},
            "point": _PARAMS,
            "excess_noise_factor": {"type": ["number", "null"], "exclusiveMinimum": 0},
        }
    ),
    "walsh": _obj(
        {
            "seed": _SEED,
            "ramsey": _obj(
                {
                    "t_init_s": _POS,
                    "t_sense_s": _POS,
                    "t_read_s": _POS,
                    "alphas_t": _vec(4, _POS),
                    "mean_pl": _POS,
                }
            ),
            "codes": {"type": "array", "items": _vec(8, {"enum": [1, -1]}), "minItems": 4, "maxItems": 4},
            "b_t": _vec(4),
            "noise_std": _NONNEG,
            "trials": {"type": "integer", "minimum": 2},
            "point": _PARAMS,
        }
    ),
}

DEFAULTS = {
    "fit-bias": {"seed": 0},
    "linearize": {"seed": 0, "point": _REFERENCE_POINT, "addressed": _DEFAULT_ADDRESSED},
    "synth": {"seed": 0, "params": _REFERENCE_POINT, "channels": "default", "coils": "default", "synth": _DEFAULT_SYNTH},
    "demod": {"seed": 0, "reference": None, "channels": "default", "settle_s": 0.5},
    "reconstruct": {"seed": 0, "point": _REFERENCE_POINT, "addressed": _DEFAULT_ADDRESSED},
    "pipeline": {
        "seed": 0,
        "params": _REFERENCE_POINT,
        "channels": "default",
        "coils": "default",
        "synth": _DEFAULT_SYNTH,
        "settle_s": 1.0,
        "cancel_laser_noise": True,
        "spectral_method": "periodogram",
        "write_streams": False,
    },
    "sensitivity": {
        "seed": 0,
        "slopes_v_per_hz": LOCKIN_SLOPES.tolist(),
        "bandwidth_hz": 0.5,
        "i_sig_a": I_SIG,
        "i_ref_a": I_REF,
        "r_sig_ohm": R_SIG,
        "include_reference": True,
        "matrix": "linearized",
        "point": _REFERENCE_POINT,
        "excess_noise_factor": None,
    },
    "walsh": {
        "seed": 0,
        "ramsey": {"t_init_s": 1e-6, "t_sense_s": 1e-6, "t_read_s": 1e-6, "alphas_t": [1e-6] * 4, "mean_pl": 1.0},
        "b_t": [1e-8, -2e-8, 1.5e-8, 5e-9],
        "noise_std": 0.01,
        "trials": 10000,
        "point": _REFERENCE_POINT,
    },
}

def _merge(base, override):
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(command: str, user: dict | None = None, seed: int | None = None) -> dict:
    """Validate the user document, merge it over the defaults and validate again."""
    if command not in SCHEMAS:
        raise ConfigError(f"unknown command {command!r}")
    user = {} if user is None else user
    if not isinstance(user, dict):
        raise ConfigError("configuration must be a JSON object")
    schema = SCHEMAS[command]
    try:
        jsonschema.validate(user, schema)
        cfg = _merge(DEFAULTS[command], user)
        if seed is not None:
            cfg["seed"] = seed
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid {command} config at {where}: {exc.message}") from None
    return cfg


def load_document(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return doc


def extract_config(doc: dict, command: str) -> dict:
    """Accept either a plain config or a previous output that embeds one."""
    if isinstance(doc, dict) and "provenance" in doc:
        prov = doc["provenance"]
        if prov.get("command") != command:
            raise ConfigError(f"embedded config is for {prov.get('command')!r}, not {command!r}")
        return prov["config"]
    return doc
