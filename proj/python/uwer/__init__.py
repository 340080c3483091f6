"""Python front end for the UW-ER C++ core.

Configs are plain dicts; missing keys keep their defaults.
"""

import json

from . import _uwer
from ._uwer import ConfigError, Dataset, Rng, bessel_j0, jakes_rho, uw_loss

__version__ = _uwer.__version__

__all__ = [
    "ConfigError",
    "Dataset",
    "Rng",
    "bessel_j0",
    "jakes_rho",
    "uw_loss",
    "default_channel_config",
    "default_train_config",
    "generate_dataset",
    "load_dataset",
    "run_stream",
    "main",
]


def default_channel_config():
    return json.loads(_uwer.default_channel_config())


def default_train_config():
    return json.loads(_uwer.default_train_config())


def generate_dataset(config=None):
    return _uwer.generate_dataset(json.dumps(config or {}))


def load_dataset(path):
    return _uwer.load_dataset(str(path))


def run_stream(dataset, config=None, seed=0):
    """Train over the environment sequence and return headline metrics."""
    return _uwer.run_stream(dataset, json.dumps(config or {}), seed)


def main(args):
    """Run a `uwer` command line; returns its exit code."""
    return _uwer.cli_main([str(a) for a in args])
