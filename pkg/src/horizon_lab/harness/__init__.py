"""Experiment orchestration: configs, experiments, reports and the CLI."""

from .config import ExperimentConfig, build_config, load_config, scenario_config
from .experiments import (
    run_baseline_comparison,
    run_bilevel_experiment,
    run_decomposition_check,
    run_sweep,
    run_theory_check,
)
from .reporting import write_report

__all__ = [
    "ExperimentConfig",
    "build_config",
    "load_config",
    "run_baseline_comparison",
    "run_bilevel_experiment",
    "run_decomposition_check",
    "run_sweep",
    "run_theory_check",
    "scenario_config",
    "write_report",
]
