"""Variance-preserving diffusion schedule and the truncated deterministic estimator.

Timesteps are 1-based throughout: ``t = 1..T`` with the convention
``alpha_bar(0) = 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .numerics import fft2, ifft2

MeanFn = Callable[[np.ndarray, int], np.ndarray]


@dataclass(frozen=True)
class NoiseSchedule:
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sigma2: np.ndarray
    snr: np.ndarray

    @property
    def T(self) -> int:
        return len(self.alpha)

    def check_step(self, t: int) -> int:
        if not 1 <= t <= self.T:
            raise ValueError(f"timestep {t} outside 1..{self.T}")
        return int(t)

    def alpha_at(self, t):
        return self.alpha[np.asarray(t) - 1]

    def alpha_bar_at(self, t):
        """``alpha_bar`` for ``t`` in ``0..T`` (scalar or array)."""
        t = np.asarray(t)
        return np.where(t == 0, 1.0, self.alpha_bar[np.maximum(t, 1) - 1])

    def snr_db(self) -> np.ndarray:
        return 10 * np.log10(self.snr)


def make_schedule(T: int, alpha_first: float, alpha_last: float) -> NoiseSchedule:
    """Linear schedule of ``alpha_t`` from ``alpha_first`` (t=1) to ``alpha_last`` (t=T)."""
    if T < 1:
        raise ValueError(f"T must be positive, got {T}")
    for a in (alpha_first, alpha_last):
        if not 0.0 < a < 1.0:
            raise ValueError(f"schedule endpoint {a} outside (0, 1)")
    if alpha_last > alpha_first:
        raise ValueError("alpha_last must not exceed alpha_first")
    alpha = np.linspace(alpha_first, alpha_last, T) if T > 1 else np.array([alpha_first])
    alpha_bar = np.cumprod(alpha)
    alpha_bar_prev = np.concatenate([[1.0], alpha_bar[:-1]])
    sigma2 = (1 - alpha) * (1 - alpha_bar_prev) / (1 - alpha_bar)
    return NoiseSchedule(alpha, alpha_bar, sigma2, alpha_bar / (1 - alpha_bar))


def alpha_last_for_min_snr(T: int, alpha_first: float, min_snr_db: float) -> float:
    """``alpha_last`` such that the linear schedule ends at ``snr(T) = min_snr_db``.

    Lets schedules of different length span the same SNR range.
    """
    if T < 2:
        raise ValueError("need T >= 2 to place the last endpoint")
    target = np.log(10 ** (min_snr_db / 10))

    def gap(a_last):
        # floor keeps the log finite when the trial endpoint drives snr(T) to zero
        return np.log(max(make_schedule(T, alpha_first, a_last).snr[-1], 1e-300)) - target

    lo = 1e-9
    if gap(alpha_first) < 0:
        raise ValueError(f"alpha_first={alpha_first} already ends below {min_snr_db} dB at T={T}")
    if gap(lo) > 0:
        raise ValueError(f"cannot reach {min_snr_db} dB with T={T}")
    return float(optimize.brentq(gap, lo, alpha_first, xtol=1e-14, rtol=1e-14))


def forward_diffuse(h0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """Closed-form forward process ``sqrt(ab_t) h0 + sqrt(1 - ab_t) eps``."""
    ab = schedule.alpha_bar_at(schedule.check_step(t))
    return np.sqrt(ab) * h0 + np.sqrt(1 - ab) * eps


def posterior_coefficients(t: int, schedule: NoiseSchedule) -> tuple[float, float]:
    """Weights ``(c0, ct)`` of ``h0`` and ``h_t`` in the forward-posterior mean."""
    schedule.check_step(t)
    a = schedule.alpha_at(t)
    ab = schedule.alpha_bar_at(t)
    ab_prev = schedule.alpha_bar_at(t - 1)
    c0 = np.sqrt(ab_prev) * (1 - a) / (1 - ab)
    ct = np.sqrt(a) * (1 - ab_prev) / (1 - ab)
    return float(c0), float(ct)


def posterior_mean(h_t: np.ndarray, h0: np.ndarray, t: int, schedule: NoiseSchedule) -> np.ndarray:
    c0, ct = posterior_coefficients(t, schedule)
    return c0 * h0 + ct * h_t


def posterior_var(t: int, schedule: NoiseSchedule) -> float:
    return float(schedule.sigma2[schedule.check_step(t) - 1])


def snr_of_step(t: int, schedule: NoiseSchedule) -> float:
    return float(schedule.snr[schedule.check_step(t) - 1])


def match_timestep(snr_obs: float, schedule: NoiseSchedule) -> int:
    """Step whose diffusion SNR is closest (linear scale) to ``snr_obs``.

    Ties go to the smaller step.
    """
    if snr_obs == np.inf:
        return 1
    return int(np.argmin(np.abs(snr_obs - schedule.snr))) + 1


@dataclass
class EstimationTrace:
    """Result of one reverse run.

    ``intermediates[k]`` is the angular-domain estimate at step ``t_hat - k``,
    so the first entry is the normalized observation and the last is step 0.
    """

    t_hat: int
    intermediates: list = field(default_factory=list)
    estimate: np.ndarray | None = None
    network_evaluations: int = 0

    def steps(self) -> list[int]:
        return list(range(self.t_hat, self.t_hat - len(self.intermediates), -1))


def _as_mean_fn(denoiser, schedule: NoiseSchedule, shape: tuple[int, int]) -> MeanFn:
    if callable(denoiser):
        return denoiser
    from .dmnet import predict_mean  # deferred: dmnet imports this module

    denoiser.config.check_input(*shape)

    def mean_fn(h_t, t):
        return predict_mean(h_t, t, denoiser, schedule)

    return mean_fn


def reverse_process(h_start: np.ndarray, t_hat: int, mean_fn: MeanFn, keep_trace: bool = True):
    """Iterate ``h_{t-1} = mean_fn(h_t, t)`` for ``t = t_hat .. 1`` without resampling."""
    h = h_start
    trace = [h] if keep_trace else None
    for t in range(t_hat, 0, -1):
        h = mean_fn(h, t)
        if keep_trace:
            trace.append(h)
    return h, trace


def estimate_channel(obs, denoiser, schedule: NoiseSchedule, keep_trace: bool = True) -> EstimationTrace:
    """Channel estimate from pilots via the truncated reverse diffusion.

    ``denoiser`` is either trained network parameters or any callable
    ``(h_t, t) -> h_{t-1}`` acting on angular-domain latents.  ``obs.y`` may
    hold a batch of observations with leading axes; they all share the noise
    variance and hence the entry step.
    """
    y, pilots, eta2 = obs.y, obs.pilots, obs.noise_variance
    mean_fn = _as_mean_fn(denoiser, schedule, (y.shape[-2], pilots.shape[0]))
    h = y @ pilots.conj().T
    h = h / np.sqrt(1 + eta2)
    h = fft2(h)
    t_hat = match_timestep(np.inf if eta2 == 0 else 1.0 / eta2, schedule)
    calls = 0

    def counted(h_t, t):
        nonlocal calls
        calls += 1
        return mean_fn(h_t, t)

    h0, trace = reverse_process(h, t_hat, counted, keep_trace)
    return EstimationTrace(t_hat, trace or [], ifft2(h0), calls)
