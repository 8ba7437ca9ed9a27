"""Experiment runner, file formats and report emission."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .io import DataError
from .main import main
from .report import ReportRow, read_csv, to_csv
from .runner import RunOutput, run

__all__ = [
    "ConfigError",
    "DataError",
    "ExperimentConfig",
    "ReportRow",
    "RunOutput",
    "load_config",
    "main",
    "parse_config",
    "read_csv",
    "run",
    "to_csv",
]
