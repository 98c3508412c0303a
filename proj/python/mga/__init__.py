"""Age-group aware gender classification with age estimation."""

import json

from ._core import (
    ConfigError,
    ContractError,
    DataError,
    DimensionError,
    GeometryError,
    MgaError,
    NumericError,
    StateError,
    build_feature,
    coarse_group,
    feature_length,
    fuse_experts,
    parameter_count,
    synthesize,
)
from . import _core

__all__ = [
    "ConfigError", "ContractError", "DataError", "DimensionError", "GeometryError", "MgaError",
    "NumericError", "StateError", "build_feature", "coarse_group", "feature_length", "fuse_experts",
    "metrics", "parameter_count", "predict", "synthesize", "train",
]


def train(manifest, out, stages=(1, 4), config="", seed=None):
    """Run stages first..last on fold 0; returns {run name: per-epoch losses}."""
    first, last = stages
    return json.loads(_core._train(str(manifest), str(out), first, last, str(config), seed))


def predict(checkpoint, manifest, network="mga", config=""):
    """One dict per manifest record: id, p_male, gender, age, group."""
    return json.loads(_core._predict(str(checkpoint), str(manifest), network, str(config)))


def metrics(p_male, ages, true_ages, true_genders):
    """Evaluation report as a dict (percentages, MAE in years)."""
    return json.loads(_core._metrics(list(p_male), list(ages), list(true_ages), list(true_genders)))
