"""Experiment configuration, evaluation sweeps and reports."""
from .config import DEFAULTS, ExperimentConfig
from .experiments import (
    ESTIMATORS,
    Artifacts,
    dm_estimates,
    fit_baselines,
    make_datasets,
    run_intermediate_mse,
    run_matched_steps,
    run_mse_vs_snr,
    run_mse_vs_T,
    shared_noise,
    train_network,
)

__all__ = [
    "DEFAULTS", "ESTIMATORS", "Artifacts", "ExperimentConfig", "dm_estimates", "fit_baselines", "make_datasets",
    "run_intermediate_mse", "run_matched_steps", "run_mse_vs_T", "run_mse_vs_snr", "shared_noise", "train_network",
]
