"""Convolutional denoiser, its training loop and weight persistence."""
from .model import (
    DMNetConfig,
    DMNetParams,
    analytic_param_count,
    count_params,
    embed_time,
    init_params,
    load_params,
    mean_from_eps,
    net_forward,
    predict_eps,
    predict_mean,
    save_params,
)
from .train import AdamState, TrainConfig, adam_step, clip_by_global_norm, eps_loss, evaluate_loss, loss_and_grad, train

__all__ = [
    "AdamState", "DMNetConfig", "DMNetParams", "TrainConfig", "adam_step", "analytic_param_count",
    "clip_by_global_norm", "count_params", "embed_time", "eps_loss", "evaluate_loss", "init_params",
    "load_params", "loss_and_grad", "mean_from_eps", "net_forward", "predict_eps", "predict_mean",
    "save_params", "train",
]
