"""Experiment harness: config files, dataset synthesis, runs, sweeps, reports."""

from .config import (
    DenoiserSpec,
    ExperimentConfig,
    ImageSpec,
    MaskSpec,
    NoiseSpec,
    SolverSpec,
)
from .experiment import (
    Dataset,
    RunRecord,
    build_dataset,
    ensemble_configs,
    load_dataset,
    load_records,
    report,
    run,
    sweep,
    synth,
)

__all__ = [
    "DenoiserSpec",
    "ExperimentConfig",
    "ImageSpec",
    "MaskSpec",
    "NoiseSpec",
    "SolverSpec",
    "Dataset",
    "RunRecord",
    "build_dataset",
    "ensemble_configs",
    "load_dataset",
    "load_records",
    "report",
    "run",
    "sweep",
    "synth",
]
