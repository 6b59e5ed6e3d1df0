"""Python bindings for the hqm C++ core.

Configs and datasets cross the boundary as JSON; the helpers below take and
return plain dicts.
"""

import json

from ._hqm import (
    Box,
    ConfigError,
    ContractError,
    FormatError,
    NumericError,
    amm_mask,
    brute_force_assignment,
    giou,
    hungarian,
    iou,
    shift_box,
    sigmoid_focal_sum,
    top_k_indices,
)
from . import _hqm


def default_config():
    return json.loads(_hqm.default_config_json())


def tiny_config():
    return json.loads(_hqm.tiny_config_json())


def normalize_config(config):
    """Fill defaults and validate; raises ConfigError on bad input."""
    return json.loads(_hqm.normalize_config_json(json.dumps(config)))


def generate_dataset(config, seed, count):
    return json.loads(_hqm.generate_dataset_json(json.dumps(config), seed, count))


def train(config, write_artifacts=False):
    """Returns one metrics dict per epoch."""
    return _hqm.train(json.dumps(config), write_artifacts)


def grad_check(config=None, strategies=("baseline",)):
    """Max relative gradient error per strategy (tiny config when None)."""
    return _hqm.grad_check("" if config is None else json.dumps(config), list(strategies))


def evaluate_checkpoint(checkpoint, dataset):
    return _hqm.evaluate_checkpoint(str(checkpoint), str(dataset))


__all__ = [
    "Box",
    "ConfigError",
    "ContractError",
    "FormatError",
    "NumericError",
    "amm_mask",
    "brute_force_assignment",
    "default_config",
    "evaluate_checkpoint",
    "generate_dataset",
    "giou",
    "grad_check",
    "hungarian",
    "iou",
    "normalize_config",
    "shift_box",
    "sigmoid_focal_sum",
    "tiny_config",
    "top_k_indices",
    "train",
]
