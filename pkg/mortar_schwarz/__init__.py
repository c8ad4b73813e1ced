"""Mortar Schwarz - average Schwarz preconditioners with enriched coarse spaces."""

__version__ = "0.1.0"

from mortar_schwarz.experiments import (
    ExperimentConfig,
    RunRecord,
    run_histogram,
    run_single,
    run_table,
)
from mortar_schwarz.krylov import condition_number_dense, condition_number_lanczos, pcg

__all__ = [
    "ExperimentConfig",
    "RunRecord",
    "condition_number_dense",
    "condition_number_lanczos",
    "pcg",
    "run_histogram",
    "run_single",
    "run_table",
]
