"""Lifelong knowledge graph embedding: growth datasets, TransE-based
lifelong training (LKGE and baselines) and evaluation."""

import json as _json
import os as _os

from . import _core
from ._core import (
    ConfigError,
    Dataset,
    Error,
    IoError,
    fwt_bwt,
    load_checkpoint,
    reg_weight,
    split_sizes,
)

__all__ = [
    "ConfigError",
    "Dataset",
    "Error",
    "IoError",
    "build_dataset",
    "cli",
    "evaluate",
    "fwt_bwt",
    "load_checkpoint",
    "load_dataset",
    "reg_weight",
    "run_experiment",
    "split_sizes",
    "train",
]


def load_dataset(path):
    return Dataset.load(_os.fspath(path))


def build_dataset(recipe):
    """Build a dataset from a recipe dict (see the experiment manifests)."""
    return Dataset.from_recipe(_json.dumps(recipe))


def train(dataset, config=None, **overrides):
    """Train over every snapshot; returns the run record as a dict."""
    cfg = dict(config or {})
    cfg.update(overrides)
    return _json.loads(_core.train(dataset, _json.dumps(cfg)))


def evaluate(dataset, checkpoint, snapshot=0, filtered=True, norm="l2"):
    """Link prediction metrics of a checkpoint on one snapshot's test set."""
    return _json.loads(
        _core.evaluate(dataset, _os.fspath(checkpoint), snapshot, filtered, norm)
    )


def run_experiment(manifest, force=False):
    return _json.loads(_core.run_experiment(_os.fspath(manifest), force))


def cli(args):
    """Run an lkge-bench subcommand; returns its exit code."""
    return _core.cli([str(a) for a in args])
