"""JSON configuration: schema, loading, and assembly helpers.

A single JSON document drives the CLI.  Top-level sections:

``m``, ``n``            matrix dimensions (required for solve/calibrate/verify)
``family``              e.g. ``{"kind": "gaussian", "sigma": 1.0}``
``regularizer``         e.g. ``{"kind": "nuclear"}`` or
                        ``{"kind": "row_l1lq", "q": 2}`` or
                        ``{"kind": "sparse_plus_lowrank", "lambda1": .., "lambda2": ..}``
``lambda``              penalty weight for ``solve``
``alpha_star``          box parameter for ``solve``
``solver``              ``{"tol_obj", "max_iters", "dykstra_iters"}``
``generate``            ``{"rank", "max_entry", "omega_size", "seed", "value_mode"}``
``calibrate``           ``{"c_beta", "trials", "seed"}``
``verify``              ``{"c0", "beta", "trials", "tolerance", "seed",
                           "omega_size", "spikiness_cap"}``
``experiment``          sweep layout, see ``harness.ExperimentConfig``

Unknown keys are rejected by the schema so typos fail fast.
"""

from __future__ import annotations

import json

import jsonschema

from .families import family_from_config
from .regularizers import regularizer_from_config

__all__ = ["CONFIG_SCHEMA", "load_config", "validate_config"]

_FAMILY_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {
            "enum": ["gaussian", "bernoulli", "binomial", "poisson", "exponential"]
        },
        "sigma": {"type": "number", "exclusiveMinimum": 0},
        "N": {"type": "integer", "minimum": 1},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

_REGULARIZER_SCHEMA = {
    "type": "object",
    "properties": {
        "kind": {"enum": ["nuclear", "row_l1lq", "sparse_plus_lowrank"]},
        "q": {"type": "number", "exclusiveMinimum": 1},
        "lambda1": {"type": "number", "exclusiveMinimum": 0},
        "lambda2": {"type": "number", "exclusiveMinimum": 0},
    },
    "required": ["kind"],
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "m": {"type": "integer", "minimum": 1},
        "n": {"type": "integer", "minimum": 1},
        "family": _FAMILY_SCHEMA,
        "regularizer": _REGULARIZER_SCHEMA,
        "lambda": {"type": "number", "minimum": 0},
        "alpha_star": {"type": "number", "exclusiveMinimum": 0},
        "value_mode": {"enum": ["independent", "tied"]},
        "solver": {
            "type": "object",
            "properties": {
                "tol_obj": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "dykstra_iters": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "generate": {
            "type": "object",
            "properties": {
                "rank": {"type": "integer", "minimum": 1},
                "max_entry": {"type": "number", "exclusiveMinimum": 0},
                "omega_size": {"type": "integer", "minimum": 1},
                "seed": {"type": "integer"},
                "value_mode": {"enum": ["independent", "tied"]},
            },
            "additionalProperties": False,
        },
        "calibrate": {
            "type": "object",
            "properties": {
                "c_beta": {"type": "number", "exclusiveMinimum": 0},
                "trials": {"type": "integer", "minimum": 2},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "properties": {
                "c0": {"type": "number", "exclusiveMinimum": 0},
                "beta": {"type": "number", "exclusiveMinimum": 0},
                "trials": {"type": "integer", "minimum": 10},
                "tolerance": {"type": "number", "exclusiveMinimum": 0},
                "seed": {"type": "integer"},
                "omega_size": {"type": "integer", "minimum": 1},
                "spikiness_cap": {"type": ["number", "null"], "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "experiment": {
            "type": "object",
            "properties": {
                "sizes": {
                    "type": "array",
                    "items": {"type": "integer", "minimum": 2},
                    "minItems": 1,
                },
                "sweep": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 1,
                },
                "trials": {"type": "integer", "minimum": 1},
                "lambda_mode": {"enum": ["oracle", "corollary", "grid_cv"]},
                "alpha_star_mode": {"enum": ["oracle", "fixed"]},
                "alpha_star_fixed": {"type": "number", "exclusiveMinimum": 0},
                "c_beta": {"type": "number", "exclusiveMinimum": 0},
                "max_entry": {"type": "number", "exclusiveMinimum": 0},
                "tol_obj": {"type": "number", "exclusiveMinimum": 0},
                "max_iters": {"type": "integer", "minimum": 1},
                "dykstra_iters": {"type": "integer", "minimum": 1},
                "value_mode": {"enum": ["independent", "tied"]},
                "seed": {"type": "integer"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


def validate_config(config: dict) -> dict:
    jsonschema.validate(config, CONFIG_SCHEMA)
    return config


def load_config(path) -> dict:
    with open(path) as fh:
        config = json.load(fh)
    return validate_config(config)


def family_from(config: dict):
    return family_from_config(config.get("family", {"kind": "gaussian"}))


def regularizer_from(config: dict):
    return regularizer_from_config(config.get("regularizer", {"kind": "nuclear"}))
