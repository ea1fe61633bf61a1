"""Pipeline configuration: JSON file format, schema validation, defaults.

Every default matches the published protocol values this toolkit follows:
45 Hz cutoff, 8 selected features, a 30,000-iteration estimator cap,
8-fold CV inside an 80-20 split, and the documented hyperparameter grids.
"""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

import jsonschema

from .errors import ConfigError
from .evaluation import EvalConfig
from .extraction import ExtractionConfig
from .models import GridSpec, StackedConfig
from .selection import RfeConfig
from .spectral import BandDef

TOOL_VERSION = "0.1.0"

DEFAULT_CONFIG: dict = {
    "filter": {"cutoff_hz": 45.0},
    "bands": {
        "theta": [4.0, 8.0],
        "alpha": [8.0, 13.0],
        "beta": [13.0, 30.0],
    },
    "wavelet": {"n_cycles": 7.0, "n_freqs": 5},
    "rfe": {
        "n_select": 8,
        "step": 1,
        "C": 1.0,
        "max_iterations": 30000,
        "tolerance": 1e-4,
        "scope": "per-fold",
    },
    "grid": {
        "rf_n_estimators": [50, 100],
        "lr_C": [0.01, 1.0],
        "svm_C": [0.01, 10.0],
        "meta_C": [10.0],
        "scope": "nested",
    },
    "stacking": {"oof_folds": 5},
    "eval": {"k": 8, "test_fraction": 0.2, "inner_folds": 3, "seed": 0},
    "labeling": {"subscales": "md,pd,perf,effort"},
    "task": {"duration_s": 300.0},
    "synth": {
        "fs": 128.0,
        "duration_s": 300.0,
        "baseline_duration_s": 60.0,
        "noise_amplitude": 1.0,
        "osc_amplitude": 4.0,
    },
}

_BAND_SCHEMA = {
    "type": "array",
    "items": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 45},
    "minItems": 2,
    "maxItems": 2,
}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "filter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"cutoff_hz": {"type": "number", "exclusiveMinimum": 0}},
        },
        "bands": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "theta": _BAND_SCHEMA, "alpha": _BAND_SCHEMA, "beta": _BAND_SCHEMA,
            },
        },
        "wavelet": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_cycles": {"type": "number", "minimum": 3},
                "n_freqs": {"type": "integer", "minimum": 1},
            },
        },
        "rfe": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_select": {"type": "integer", "minimum": 1},
                "step": {"type": "integer", "minimum": 1},
                "C": {"type": "number", "exclusiveMinimum": 0},
                "max_iterations": {"type": "integer", "minimum": 1},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "scope": {"enum": ["per-fold", "full-dataset"]},
            },
        },
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "rf_n_estimators": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "lr_C": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "svm_C": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "meta_C": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "scope": {"enum": ["nested", "global"]},
            },
        },
        "stacking": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"oof_folds": {"type": "integer", "minimum": 2}},
        },
        "eval": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k": {"type": "integer", "minimum": 2},
                "test_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "inner_folds": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer"},
            },
        },
        "labeling": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"subscales": {"type": "string"}},
        },
        "task": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"duration_s": {"type": ["number", "null"], "exclusiveMinimum": 0}},
        },
        "synth": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "fs": {"type": "number", "exclusiveMinimum": 0},
                "duration_s": {"type": "number", "minimum": 60},
                "baseline_duration_s": {"type": "number", "exclusiveMinimum": 0},
                "noise_amplitude": {"type": "number", "minimum": 0},
                "osc_amplitude": {"type": "number", "minimum": 0},
            },
        },
    },
}


def _deep_merge(base: dict, override: dict) -> dict:
    merged = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def validate_config(raw: dict) -> dict:
    """Validate against the schema and merge over the defaults.

    ConfigError carries a JSON-pointer path to the offending node.
    """
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        pointer = "/" + "/".join(str(p) for p in exc.absolute_path)
        raise ConfigError(f"config invalid at {pointer}: {exc.message}", pointer) from exc
    merged = _deep_merge(DEFAULT_CONFIG, raw)
    bands = bands_from_config(merged)
    for a in bands:
        for b in bands:
            if a.name < b.name and not (a.hi_hz <= b.lo_hz or b.hi_hz <= a.lo_hz):
                raise ConfigError(f"bands {a.name} and {b.name} overlap", "/bands")
    return merged


def load_config(path: str | Path | None) -> dict:
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object", "/")
    return validate_config(raw)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(
        json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode("utf-8")
    ).hexdigest()


def provenance(cfg: dict, seed: int | None = None) -> dict:
    prov = {"config_sha256": config_hash(cfg), "tool_version": TOOL_VERSION}
    if seed is not None:
        prov["seed"] = seed
    return prov


def bands_from_config(cfg: dict) -> tuple[BandDef, BandDef, BandDef]:
    b = cfg["bands"]
    return (
        BandDef("Theta", *b["theta"]),
        BandDef("Alpha", *b["alpha"]),
        BandDef("Beta", *b["beta"]),
    )


def extraction_config(cfg: dict, spectral_only: bool = False, jobs: int = 1) -> ExtractionConfig:
    return ExtractionConfig(
        bands=bands_from_config(cfg),
        cutoff_hz=cfg["filter"]["cutoff_hz"],
        n_cycles=cfg["wavelet"]["n_cycles"],
        n_freqs=cfg["wavelet"]["n_freqs"],
        spectral_only=spectral_only,
        task_duration_s=cfg["task"]["duration_s"],
        jobs=jobs,
    )


def rfe_config(cfg: dict) -> RfeConfig:
    r = cfg["rfe"]
    return RfeConfig(
        n_select=r["n_select"], step=r["step"], C=r["C"],
        max_iterations=r["max_iterations"], tolerance=r["tolerance"],
    )


def grid_spec(cfg: dict) -> GridSpec:
    g = cfg["grid"]
    return GridSpec(
        rf_n_estimators=list(g["rf_n_estimators"]),
        lr_C=list(g["lr_C"]),
        svm_C=list(g["svm_C"]),
        meta_C=list(g["meta_C"]),
    )


def eval_config(cfg: dict, seed: int | None = None) -> EvalConfig:
    e = cfg["eval"]
    return EvalConfig(
        k=e["k"],
        test_fraction=e["test_fraction"],
        seed=e["seed"] if seed is None else seed,
        inner_folds=e["inner_folds"],
        rfe=rfe_config(cfg),
        grid=grid_spec(cfg),
        stacking=StackedConfig(oof_folds=cfg["stacking"]["oof_folds"]),
        grid_scope=cfg["grid"]["scope"],
        rfe_scope=cfg["rfe"]["scope"],
    )
