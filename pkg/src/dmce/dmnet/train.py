"""Noise-prediction training: loss, gradients, Adam and the epoch loop."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from ..diffusion import NoiseSchedule
from ..numerics import complex_to_channels, fft2, sample_standard_complex_gaussian
from .model import DMNetConfig, DMNetParams, _backward, _forward, init_params

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 128
    learning_rate: float = 2e-3
    betas: tuple[float, float] = (0.9, 0.999)
    clip_norm: float = 1.0
    seed: int = 0
    val_fraction: float = 0.1
    lr_min: float = 1e-4
    adam_eps: float = 1e-8

    def __post_init__(self):
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch size must be positive")
        if self.learning_rate <= 0 or self.clip_norm <= 0:
            raise ValueError("learning rate and clip threshold must be positive")
        if not all(0 <= b < 1 for b in self.betas):
            raise ValueError(f"moment decays must lie in [0, 1), got {self.betas}")
        if not 0 <= self.val_fraction < 1:
            raise ValueError("validation fraction must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["betas"] = list(self.betas)
        return d


def noised_batch(h0: np.ndarray, schedule: NoiseSchedule, rng, t=None, eps=None):
    """Draw ``t ~ U{1..T}`` and ``eps ~ CN(0, I)`` per sample and diffuse ``h0``."""
    b = h0.shape[0]
    if t is None:
        t = rng.integers(1, schedule.T + 1, size=b)
    if eps is None:
        eps = sample_standard_complex_gaussian(*h0.shape[1:], rng=rng, size=b)
    ab = schedule.alpha_bar_at(t)[:, None, None]
    return np.sqrt(ab) * h0 + np.sqrt(1 - ab) * eps, np.asarray(t), eps


def eps_loss(eps_hat: np.ndarray, eps: np.ndarray) -> float:
    """Mean squared error per complex entry; predicting zero scores 1 on average."""
    return float(np.mean(np.abs(eps_hat - eps) ** 2))


def _to_nhwc(z: np.ndarray, dtype) -> np.ndarray:
    return np.ascontiguousarray(complex_to_channels(z).transpose(0, 2, 3, 1), dtype=dtype)


def loss_and_grad(params: DMNetParams, h0: np.ndarray, schedule: NoiseSchedule, rng, t=None, eps=None,
                  p=None):
    """Simplified diffusion objective and its gradient for a batch of angular-domain ``h0``.

    Returns ``(loss, grads)`` where ``grads`` maps parameter names to arrays.
    ``p`` may pass already cast compute parameters to skip the conversion.
    """
    if len(h0) == 0:
        raise ValueError("empty batch")
    config = params.config
    p = params.compute_params() if p is None else p
    h_t, t, eps = noised_batch(h0, schedule, rng, t, eps)
    x = _to_nhwc(h_t, config.dtype)
    target = _to_nhwc(eps, config.dtype)
    out, cache = _forward(x, t, p, config, keep=True)
    diff = out - target
    n = h0.shape[0] * h0.shape[1] * h0.shape[2]
    loss = float(np.sum(diff.astype(np.float64) ** 2) / n)
    grads = _backward(diff * (2.0 / n), cache, p, config)
    return loss, grads


def evaluate_loss(params: DMNetParams, h0: np.ndarray, schedule: NoiseSchedule, seed: int,
                  batch_size: int = 512) -> float:
    """Noise-prediction loss on fixed draws (same ``seed`` -> same ``t``/``eps``)."""
    rng = np.random.default_rng(seed)
    p = params.compute_params()
    total = 0.0
    for start in range(0, len(h0), batch_size):
        chunk = h0[start:start + batch_size]
        h_t, t, eps = noised_batch(chunk, schedule, rng)
        out, _ = _forward(_to_nhwc(h_t, params.config.dtype), t, p, params.config, keep=False)
        total += float(np.sum((out.astype(np.float64) - _to_nhwc(eps, np.float64)) ** 2))
    return total / h0.size


@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(v) for k, v in params.items()},
                   {k: np.zeros_like(v) for k, v in params.items()})


def clip_by_global_norm(grads: dict, max_norm: float) -> tuple[dict, float]:
    norm = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
    if norm > max_norm:
        factor = max_norm / norm
        grads = {k: g * factor for k, g in grads.items()}
    return grads, norm


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, betas=(0.9, 0.999),
              eps: float = 1e-8, clip_norm: float | None = None) -> float:
    """In-place Adam update with bias correction. Returns the pre-clip gradient norm."""
    if clip_norm is not None:
        grads, norm = clip_by_global_norm(grads, clip_norm)
    else:
        norm = float(np.sqrt(sum(float(np.sum(g ** 2)) for g in grads.values())))
    b1, b2 = betas
    state.step += 1
    c1 = 1 - b1 ** state.step
    c2 = 1 - b2 ** state.step
    for k, g in grads.items():
        if g.shape != params[k].shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {k} {params[k].shape}")
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        params[k] -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(params[k].dtype)
    return norm


def _cosine_lr(cfg: TrainConfig, progress: float) -> float:
    return cfg.lr_min + 0.5 * (cfg.learning_rate - cfg.lr_min) * (1 + np.cos(np.pi * progress))


def train(samples: np.ndarray, schedule: NoiseSchedule, train_config: TrainConfig,
          net_config: DMNetConfig | None = None,
          progress: Callable[[dict], None] | None = None) -> tuple[DMNetParams, list[dict]]:
    """Fit the noise predictor on spatial-domain channels ``(M, n_rx, n_tx)``.

    The channels are moved to the angular domain first.  Returns the
    parameters with the best validation loss and the per-epoch history
    (entry 0 is the untrained network).
    """
    samples = np.asarray(samples)
    if len(samples) == 0:
        raise ValueError("empty training set")
    if net_config is None:
        net_config = DMNetConfig(n_rx=samples.shape[1], n_tx=samples.shape[2])
    net_config.check_input(samples.shape[1], samples.shape[2])
    cfg = train_config
    rng = np.random.default_rng(cfg.seed)
    data = fft2(samples)
    perm = rng.permutation(len(data))
    n_val = int(round(cfg.val_fraction * len(data)))
    val, tr = data[perm[:n_val]], data[perm[n_val:]]
    val_seed = int(rng.integers(2 ** 31))

    params = init_params(net_config, rng).astype(net_config.dtype)
    state = AdamState.zeros_like(params.params)
    monitor = val if n_val else tr

    def record(epoch, train_loss):
        val_loss = evaluate_loss(params, monitor, schedule, val_seed)
        row = {"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss}
        history.append(row)
        if progress is not None:
            progress(row)
        log.info("epoch %d train %.4f val %.4f", epoch, train_loss, val_loss)
        return val_loss

    history: list[dict] = []
    best_loss = record(0, float("nan"))
    best = params.copy()
    n_batches = int(np.ceil(len(tr) / cfg.batch_size))
    total_steps = cfg.epochs * n_batches
    step = 0
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(tr))
        losses = []
        for i in range(n_batches):
            batch = tr[order[i * cfg.batch_size:(i + 1) * cfg.batch_size]]
            loss, grads = loss_and_grad(params, batch, schedule, rng, p=params.params)
            lr = _cosine_lr(cfg, step / max(total_steps - 1, 1))
            adam_step(params.params, grads, state, lr, cfg.betas, cfg.adam_eps, cfg.clip_norm)
            losses.append(loss)
            step += 1
        val_loss = record(epoch, float(np.mean(losses)))
        if val_loss < best_loss:
            best_loss, best = val_loss, params.copy()
    return best.astype(np.float64), history
