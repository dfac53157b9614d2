"""Experiment harness: config parsing, registry, CSV emission, CLI."""

from .config import ConfigError, ExperimentConfig, config_hash, serialize_config
from .experiments import (
    EXPERIMENTS,
    RunManifest,
    load_config,
    run_experiment,
    worker_count,
)
from .tables import ResultTable, emit_table

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "config_hash",
    "serialize_config",
    "EXPERIMENTS",
    "RunManifest",
    "load_config",
    "run_experiment",
    "worker_count",
    "ResultTable",
    "emit_table",
]
