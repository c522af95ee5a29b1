"""Resilient distributed MPC for coupled microgrids under attack."""

from ._rdmpc import (
    ConfigError,
    Error,
    ExperimentConfig,
    GridSpec,
    attack_scenarios,
    battery_current,
    ocv,
    price_at,
    read_summary,
    run_experiment,
    summary_csv,
)

__all__ = [
    "ConfigError",
    "Error",
    "ExperimentConfig",
    "GridSpec",
    "attack_scenarios",
    "battery_current",
    "ocv",
    "price_at",
    "read_summary",
    "run_experiment",
    "summary_csv",
]
