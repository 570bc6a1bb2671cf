"""Selective-repeat ARQ and block-coded selective repeat: analytics, a slotted
simulator and a command-line harness."""

from .engine import (
    ExperimentConfig,
    MetricsReport,
    measure_window_max_tx,
    run,
    run_replications,
    sweep,
)

__all__ = [
    "ExperimentConfig",
    "MetricsReport",
    "measure_window_max_tx",
    "run",
    "run_replications",
    "sweep",
]
