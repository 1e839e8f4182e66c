"""Datasets, metrics, batch evaluation and the command line."""

from .config import ConfigError, RunConfig, load_config, parse_config
from .dataset import DatasetEntry, SchemaError, load_dataset
from .evaluate import EvalReport, SampleRecord, compute_metrics, evaluate, score_sample

__all__ = [
    "ConfigError",
    "DatasetEntry",
    "EvalReport",
    "RunConfig",
    "SampleRecord",
    "SchemaError",
    "compute_metrics",
    "evaluate",
    "load_config",
    "load_dataset",
    "parse_config",
    "score_sample",
]
