"""Experiment configuration: JSON schema, model construction and test samples."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
from scipy.stats import qmc

from .errors import MalformedInputError
from .model import FemSpace, StiffnessSet, assemble, constant_family, disjoint_inclusions, smooth_family

__all__ = ["SCHEMA", "load_config", "validate_config", "build_model", "test_sample", "config_hash"]

_NUM_OR_LIST = {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}, "minItems": 1}]}

_SURROGATE = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["polydisc", "product-of-radii", "legendre-product", "simplex", "legendre"]},
        "t_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "params": {"type": "array", "items": {"type": "number"}},
        "b": {"type": "number"},
        "eps": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

SCHEMA: dict[str, Any] = {
    "type": "object",
    "required": ["seed", "model"],
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "timing": {"type": "boolean"},
        "threads": {"type": "integer", "minimum": 1},
        "model": {
            "type": "object",
            "required": ["N_h", "family"],
            "properties": {
                "domain": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "N_h": {"type": "integer", "minimum": 3},
                "family": {
                    "type": "object",
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["disjoint", "smooth", "constant"]},
                        "d": {"type": "integer", "minimum": 1},
                        "J": {"type": "integer", "minimum": 1},
                        "theta": _NUM_OR_LIST,
                        "beta": {"type": "number", "exclusiveMinimum": 0},
                        "r_target": {"type": "number", "exclusiveMinimum": 0},
                        "abar": {"type": "number", "exclusiveMinimum": 0},
                    },
                    "additionalProperties": False,
                },
                "f": _NUM_OR_LIST,
            },
            "additionalProperties": False,
        },
        "method": {
            "type": "object",
            "properties": {
                "mode": {"enum": ["apriori", "bulk", "adaptive"]},
                "n": {"type": "integer", "minimum": 1},
                "n_list": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 1},
                "theta": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "surrogate": _SURROGATE,
                "reference_degree": {"type": "integer", "minimum": 1},
                "max_dim": {"type": "integer", "minimum": 1},
                "seq": {"enum": ["leja", "rleja"]},
                "p": {"enum": ["inf", "2"]},
                "alternate": {"type": "boolean"},
                "lebesgue_probe": {"type": "integer", "minimum": 0},
                "dims": {"type": "integer", "minimum": 1, "maximum": 4},
                "degree": {"type": "integer", "minimum": 0},
                "nodes": {"type": "integer", "minimum": 1},
                "bound_margin": {"type": "number", "minimum": 0},
                "train": {"type": "string", "pattern": "^(lattice|lds):[0-9]+$"},
                "covering_check": {"type": "boolean"},
                "n_max": {"type": "integer", "minimum": 1},
                "set": {"enum": ["diagonal", "blocks", "file"]},
                "file": {"type": "string"},
                "s": {"type": "number", "exclusiveMinimum": 0},
                "levels": {"type": "integer", "minimum": 1, "maximum": 14},
                "length": {"type": "integer", "minimum": 1},
                "ratio": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "gamma": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "selection": {"enum": ["first", "worst"]},
                "fit_window": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
            },
            "additionalProperties": False,
        },
        "test": {
            "type": "object",
            "required": ["kind", "size", "seed"],
            "properties": {
                "kind": {"enum": ["uniform", "sobol"]},
                "size": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer", "minimum": 0},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}, "prefix": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


def validate_config(cfg: dict) -> dict:
    """Validate against SCHEMA; raises MalformedInputError with the first problem."""
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise MalformedInputError(f"config {where}: {exc.message}") from exc
    fam = cfg["model"]["family"]
    if fam["kind"] in ("disjoint", "constant") and "theta" not in fam:
        raise MalformedInputError(f"config model/family: kind {fam['kind']!r} needs theta")
    if fam["kind"] == "smooth":
        missing = [k for k in ("beta", "r_target") if k not in fam]
        if missing or not ("J" in fam or "d" in fam):
            raise MalformedInputError("config model/family: smooth family needs J (or d), beta and r_target")
    dom = cfg["model"].get("domain", [0, 1])
    if list(dom) != [0, 1]:
        raise MalformedInputError("config model/domain: only (0, 1) is supported")
    return cfg


def load_config(path: str | Path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise MalformedInputError(f"cannot read config {path}: {exc}") from exc
    return validate_config(cfg)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


def build_model(block: dict) -> StiffnessSet:
    space = FemSpace(block["N_h"])
    fam = block["family"]
    abar = fam.get("abar", 1.0)
    kind = fam["kind"]
    if kind in ("disjoint", "constant"):
        theta = fam["theta"]
        d = fam.get("d", fam.get("J"))
        if isinstance(theta, list):
            if d is not None and d != len(theta):
                raise MalformedInputError("theta list length differs from d")
            thetas = theta
        else:
            thetas = [float(theta)] * (d or 1)
        family = disjoint_inclusions(space, thetas, abar) if kind == "disjoint" else constant_family(space, thetas, abar)
    else:
        family = smooth_family(space, fam.get("J", fam.get("d")), fam["beta"], fam["r_target"], abar)
    f = block.get("f", 1.0)
    load = np.full(space.n_h, float(f)) if not isinstance(f, list) else np.asarray(f, dtype=float)
    return assemble(family, space, load)


def test_sample(block: dict, dims: int) -> np.ndarray:
    kind, size, seed = block["kind"], block["size"], block["seed"]
    if kind == "uniform":
        return np.random.default_rng(seed).uniform(-1.0, 1.0, (size, dims))
    return 2.0 * qmc.Sobol(d=dims, scramble=True, seed=seed).random(size) - 1.0
