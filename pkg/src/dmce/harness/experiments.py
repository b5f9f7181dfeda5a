"""Evaluation sweeps: MSE over SNR, over the number of diffusion steps, per reverse step."""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import baselines
from ..channels import (DOMAIN_NOISE, DOMAIN_TEST, DOMAIN_TRAIN, ChannelDataset, PilotObservation, generate_dataset,
                        load_dataset, observe, pilot_matrix, sample_rng)
from ..diffusion import NoiseSchedule, estimate_channel, match_timestep
from ..dmnet import DMNetParams, load_params, save_params, train
from ..numerics import ifft2, sample_standard_complex_gaussian, unvec, vec
from .config import ExperimentConfig

log = logging.getLogger(__name__)

ESTIMATORS = ("LS", "Scov", "genie", "GMM", "DM")


@dataclass
class Artifacts:
    root: Path

    @property
    def train_data(self) -> Path:
        return self.root / "train.dmce"

    @property
    def test_data(self) -> Path:
        return self.root / "test.dmce"

    def net(self, T: int) -> Path:
        return self.root / f"net_T{T}.dmnw"

    def history(self, T: int) -> Path:
        return self.root / f"train_history_T{T}.csv"

    @property
    def scov(self) -> Path:
        return self.root / "scov.dmgm"

    @property
    def gmm(self) -> Path:
        return self.root / "gmm.dmgm"


def require(path: Path) -> Path:
    if not Path(path).exists():
        raise FileNotFoundError(f"required artifact not found: {path}")
    return Path(path)


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def make_datasets(config: ExperimentConfig) -> tuple[ChannelDataset, ChannelDataset]:
    """Training and test channels from disjoint seed domains of the master seed."""
    ch = config.channel
    train_ds = generate_dataset(ch, config.n_train, config.seed, DOMAIN_TRAIN)
    test_ds = generate_dataset(ch, config.n_test, config.seed, DOMAIN_TEST)
    return train_ds, test_ds


def shared_noise(test_ds: ChannelDataset, seed: int) -> np.ndarray:
    """Unit-variance noise per test channel, shared by every SNR point and estimator."""
    rng = sample_rng(seed, DOMAIN_NOISE, 0)
    m, n_rx, n_tx = test_ds.samples.shape
    return sample_standard_complex_gaussian(n_rx, n_tx, rng, size=m)


def train_network(config: ExperimentConfig, train_ds: ChannelDataset, T: int | None = None, progress=None):
    return train(train_ds.samples, config.schedule(T), config.train_config, config.net, progress=progress)


def fit_baselines(config: ExperimentConfig, train_ds: ChannelDataset):
    shape = (train_ds.n_rx, train_ds.n_tx)
    scov = baselines.covariance_model(baselines.sample_covariance(train_ds.samples), shape)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, DOMAIN_TRAIN, 1]))
    gmm = baselines.fit_gmm(train_ds.samples, config.gmm, rng, shape)
    return scov, gmm


def _nmse(est: np.ndarray, h: np.ndarray) -> np.ndarray:
    n = h.shape[-1] * h.shape[-2]
    return np.sum(np.abs(est - h) ** 2, axis=(-2, -1)) / n


def _summary(errors: np.ndarray) -> tuple[float, float]:
    n = len(errors)
    se = float(np.std(errors, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return float(np.mean(errors)), se


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield slice(start, min(start + size, n))


def dm_estimates(y: np.ndarray, pilots: np.ndarray, eta2: float, net: DMNetParams, schedule: NoiseSchedule,
                 batch_size: int = 250, keep_trace: bool = False):
    """DM estimates for a batch of observations, processed in chunks.

    Returns the spatial estimates and, with ``keep_trace``, the stacked
    angular-domain intermediates of shape ``(t_hat + 1, B, n_rx, n_tx)``.
    """
    est = np.empty(y.shape, dtype=complex)
    traces = []
    for sl in _chunks(len(y), batch_size):
        res = estimate_channel(PilotObservation(y[sl], pilots, eta2), net, schedule, keep_trace=keep_trace)
        est[sl] = res.estimate
        if keep_trace:
            traces.append(np.stack(res.intermediates))
    return est, (np.concatenate(traces, axis=1) if keep_trace else None)


def run_mse_vs_snr(config: ExperimentConfig, test_ds: ChannelDataset, net: DMNetParams | None = None,
                   scov=None, gmm=None, schedule: NoiseSchedule | None = None) -> list[dict]:
    """Normalized MSE of every available estimator on shared (H, N) draws per SNR."""
    schedule = schedule or config.schedule()
    h = test_ds.samples
    noise = shared_noise(test_ds, config.seed)
    pilots = pilot_matrix(test_ds.n_tx)
    n_rx, n_tx = test_ds.n_rx, test_ds.n_tx
    bs = int(config.raw["eval"]["batch_size"])
    rows = []
    for snr_db in config.snr_grid:
        eta2 = 10 ** (-snr_db / 10)
        obs = observe(h, pilots, eta2, noise=noise)
        h_ls = baselines.ls_estimate(obs)
        y = vec(h_ls)
        estimates = {"LS": h_ls}
        if scov is not None:
            estimates["Scov"] = unvec(baselines.lmmse_estimate(y, scov.covariances[0], eta2), n_rx, n_tx)
        estimates["genie"] = unvec(baselines.genie_estimate(y, test_ds.c_rx, test_ds.c_tx, eta2), n_rx, n_tx)
        if gmm is not None:
            estimates["GMM"] = unvec(baselines.gmm_estimate(y, gmm, eta2), n_rx, n_tx)
        if net is not None:
            estimates["DM"], _ = dm_estimates(obs.y, pilots, eta2, net, schedule, bs)
        for name in ESTIMATORS:
            if name in estimates:
                mse, se = _summary(_nmse(estimates[name], h))
                rows.append({"snr_db": float(snr_db), "estimator": name, "nmse": mse, "count": len(h),
                             "stderr": se})
        log.info("snr %.1f dB: %s", snr_db, {r["estimator"]: round(r["nmse"], 5) for r in rows[-len(estimates):]})
    return rows


def run_intermediate_mse(config: ExperimentConfig, test_ds: ChannelDataset, net: DMNetParams,
                         schedule: NoiseSchedule | None = None, snr_grid=None) -> list[dict]:
    """MSE of ``ifft2`` of every intermediate reverse-process latent, per SNR and step."""
    schedule = schedule or config.schedule()
    snr_grid = config.snr_grid if snr_grid is None else snr_grid
    h = test_ds.samples
    noise = shared_noise(test_ds, config.seed)
    pilots = pilot_matrix(test_ds.n_tx)
    bs = int(config.raw["eval"]["batch_size"])
    rows = []
    for snr_db in snr_grid:
        eta2 = 10 ** (-snr_db / 10)
        obs = observe(h, pilots, eta2, noise=noise)
        _, trace = dm_estimates(obs.y, pilots, eta2, net, schedule, bs, keep_trace=True)
        t_hat = trace.shape[0] - 1
        for k in range(trace.shape[0]):
            mse, se = _summary(_nmse(ifft2(trace[k]), h))
            rows.append({"snr_db": float(snr_db), "t": t_hat - k, "t_hat": t_hat, "nmse": mse,
                         "count": len(h), "stderr": se})
    return rows


def run_matched_steps(config: ExperimentConfig, schedule: NoiseSchedule | None = None) -> list[dict]:
    schedule = schedule or config.schedule()
    rows = []
    for snr_db in config.snr_grid:
        t_hat = match_timestep(10 ** (snr_db / 10), schedule)
        rows.append({"snr_db": float(snr_db), "t_hat": t_hat, "T": schedule.T,
                     "dm_snr_db": float(10 * np.log10(schedule.snr[t_hat - 1]))})
    return rows


def run_mse_vs_T(config: ExperimentConfig, train_ds: ChannelDataset, test_ds: ChannelDataset, T_list=None,
                 snr_grid=None, net_dir: Path | None = None, progress=None) -> list[dict]:
    """Train (or reuse from ``net_dir``) one network per ``T`` and evaluate DM MSE.

    Every network uses the same training seed and data; only the schedule length changes.
    """
    T_list = config.raw["eval"]["T_list"] if T_list is None else T_list
    snr_grid = np.asarray(config.raw["eval"]["T_snr_db"] if snr_grid is None else snr_grid, dtype=float)
    sub = config.with_overrides(eval__snr_db=[float(s) for s in snr_grid])
    rows = []
    for T in T_list:
        schedule = config.schedule(T)
        path = Artifacts(net_dir).net(T) if net_dir is not None else None
        if path is not None and path.exists():
            net = load_params(path, expect=config.net)
        else:
            net, _ = train(train_ds.samples, schedule, config.train_config, config.net, progress=progress)
            if path is not None:
                save_params(net, path)
        for r in run_mse_vs_snr(sub, test_ds, net, schedule=schedule):
            if r["estimator"] == "DM":
                rows.append({"T": int(T), "snr_db": r["snr_db"], "nmse": r["nmse"], "count": r["count"],
                             "stderr": r["stderr"]})
    return rows


def load_test_artifacts(config: ExperimentConfig, T: int | None = None):
    art = Artifacts(config.output_dir)
    test_ds = load_dataset(require(art.test_data))
    net = load_params(require(art.net(T or config.T)), expect=config.net)
    return art, test_ds, net
