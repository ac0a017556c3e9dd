"""Experiment orchestration: configs, ingestion, evaluation runs, comparisons and the CLI."""

from .compare import AdvantageCheck, ComparisonRow, check_band_advantage, compare_bands, write_comparison_csv
from .config import ExperimentConfig, format_config, load_config, parse_config
from .ingest import Dataset, ingest, load_dataset
from .pipeline import RunLedger, run_experiment

__all__ = [
    "AdvantageCheck", "ComparisonRow", "Dataset", "ExperimentConfig", "RunLedger",
    "check_band_advantage", "compare_bands", "format_config", "ingest", "load_config", "load_dataset",
    "parse_config", "run_experiment", "write_comparison_csv",
]
