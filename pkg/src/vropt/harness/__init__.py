"""Experiment harness: config, datasets, seeded runner, CLI."""

from .config import ExperimentConfig, config_from_dict, load_config  # noqa: F401
from .datasets import Dataset, load_csv_dataset, load_idx_dataset  # noqa: F401
from .runner import (  # noqa: F401
    ComparisonSummary,
    MetricRow,
    RunRecord,
    compare_report,
    load_records,
    run_experiment,
    run_single,
    write_records,
)
