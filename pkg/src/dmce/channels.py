"""Conditionally Gaussian spatial channel model and pilot observations.

Every channel sample has its own random cluster parameters (angles and
powers).  Given those, the channel is zero-mean complex Gaussian with a
Kronecker covariance ``C = C_tx^T kron C_rx`` built from a Laplacian power
angular spectrum around every cluster centre.  Pooled over the cluster
parameters the distribution is non-Gaussian.
"""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .fileformat import CorruptFileError
from .numerics import dft_matrix, is_hermitian, psd_sqrt, sample_standard_complex_gaussian

# seed-domain tags keep train/test/noise streams disjoint for one master seed
DOMAIN_TRAIN = 0
DOMAIN_TEST = 1
DOMAIN_NOISE = 2


@dataclass(frozen=True)
class ChannelModelConfig:
    n_rx: int = 16
    n_tx: int = 4
    num_clusters: int = 3
    sector_deg: tuple[float, float] = (-60.0, 60.0)
    spread_deg: float = 2.0
    quad_points: int = 180

    def __post_init__(self):
        if self.n_rx < 1 or self.n_tx < 1:
            raise ValueError("antenna counts must be positive")
        lo, hi = self.sector_deg
        if not lo < hi:
            raise ValueError(f"empty sector {self.sector_deg}")
        if self.spread_deg < 0:
            raise ValueError("angular spread must be nonnegative")
        object.__setattr__(self, "sector_deg", (float(lo), float(hi)))

    @classmethod
    def from_dict(cls, d: dict) -> "ChannelModelConfig":
        d = dict(d)
        if "sector_deg" in d:
            d["sector_deg"] = tuple(d["sector_deg"])
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["sector_deg"] = list(self.sector_deg)
        return d


@dataclass
class ClusterParams:
    rx_angles: np.ndarray
    tx_angles: np.ndarray
    powers: np.ndarray
    angular_spread: float

    @property
    def num_clusters(self) -> int:
        return len(self.powers)


@dataclass
class ChannelCovariance:
    c_rx: np.ndarray
    c_tx: np.ndarray

    @property
    def full(self) -> np.ndarray:
        """``C_tx^T kron C_rx``, the covariance of the column-stacked channel."""
        return np.kron(self.c_tx.T, self.c_rx)


@dataclass
class ChannelDataset:
    """Spatial-domain channels ``(M, n_rx, n_tx)`` with their true covariance factors."""

    samples: np.ndarray
    c_rx: np.ndarray
    c_tx: np.ndarray
    config: ChannelModelConfig
    seed: int | None = None
    domain: int | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def n_rx(self) -> int:
        return self.samples.shape[1]

    @property
    def n_tx(self) -> int:
        return self.samples.shape[2]

    def covariance(self, i: int) -> ChannelCovariance:
        return ChannelCovariance(self.c_rx[i], self.c_tx[i])

    def subset(self, idx) -> "ChannelDataset":
        return ChannelDataset(self.samples[idx], self.c_rx[idx], self.c_tx[idx],
                              self.config, self.seed, self.domain, dict(self.metadata))


@dataclass
class PilotObservation:
    y: np.ndarray
    pilots: np.ndarray
    noise_variance: float

    @property
    def snr(self) -> float:
        return np.inf if self.noise_variance == 0 else 1.0 / self.noise_variance


def sample_cluster_params(config: ChannelModelConfig, rng) -> ClusterParams:
    """Draw cluster centres uniformly in the sector and simplex-uniform powers."""
    p = config.num_clusters
    if p < 1:
        raise ValueError("need at least one cluster")
    lo, hi = np.deg2rad(config.sector_deg)
    rx = rng.uniform(lo, hi, size=p)
    tx = rng.uniform(lo, hi, size=p)
    g = rng.standard_exponential(p)
    return ClusterParams(rx, tx, g / g.sum(), float(np.deg2rad(config.spread_deg)))


def _laplace_nodes(spread: float, n_points: int) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and weights of a discrete Laplacian density with std ``spread``.

    The nodes cover +/- 10 standard deviations around the centre (the mass
    outside is below 1e-6) and the weights are renormalized to sum one.
    """
    if spread == 0:
        return np.zeros(1), np.ones(1)
    half = 10.0 * spread
    step = 2 * half / n_points
    x = -half + step * (np.arange(n_points) + 0.5)
    w = np.exp(-np.sqrt(2.0) * np.abs(x) / spread)
    return x, w / w.sum()


def _side_covariance(n: int, centres: np.ndarray, powers: np.ndarray, spread: float, n_points: int) -> np.ndarray:
    offs, w = _laplace_nodes(spread, n_points)
    theta = (centres[:, None] + offs[None, :]).ravel()
    weights = (powers[:, None] * w[None, :]).ravel()
    a = np.exp(1j * np.pi * np.arange(n)[:, None] * np.sin(theta)[None, :])
    c = (a * weights) @ a.conj().T
    return 0.5 * (c + c.conj().T)


def build_covariance(params: ClusterParams, n_rx: int, n_tx: int, quad_points: int = 180) -> ChannelCovariance:
    """Kronecker covariance factors for one realization of the cluster parameters.

    Each factor is a power-weighted sum of ULA steering-vector outer products
    integrated against a Laplacian angular density.  Both factors are scaled
    to trace ``n`` so that ``trace(C_tx^T kron C_rx) = n_rx * n_tx``.
    """
    c_rx = _side_covariance(n_rx, params.rx_angles, params.powers, params.angular_spread, quad_points)
    c_tx = _side_covariance(n_tx, params.tx_angles, params.powers, params.angular_spread, quad_points)
    c_rx *= n_rx / np.trace(c_rx).real
    c_tx *= n_tx / np.trace(c_tx).real
    for c in (c_rx, c_tx):
        if not is_hermitian(c):
            raise np.linalg.LinAlgError("covariance factor is not Hermitian")
        if np.linalg.eigvalsh(c).min() < -1e-10 * np.trace(c).real:
            raise np.linalg.LinAlgError("covariance factor is not PSD")
    return ChannelCovariance(c_rx, c_tx)


def sample_channel(cov: ChannelCovariance, rng, size=None) -> np.ndarray:
    """Draw ``H = L_rx W L_tx^T`` so that ``vec(H) ~ CN(0, C_tx^T kron C_rx)``.

    ``size`` draws that many independent channels from the same covariance.
    """
    l_rx = psd_sqrt(cov.c_rx)
    l_tx = psd_sqrt(cov.c_tx.T)
    w = sample_standard_complex_gaussian(cov.c_rx.shape[0], cov.c_tx.shape[0], rng, size=size)
    return l_rx @ w @ l_tx.T


def sample_rng(seed: int, domain: int, index: int) -> np.random.Generator:
    """Independent stream for one sample; depends only on (seed, domain, index)."""
    return np.random.default_rng(np.random.SeedSequence([seed, domain, index]))


def generate_dataset(config: ChannelModelConfig, m: int, seed: int, domain: int = DOMAIN_TRAIN,
                     normalize: bool = True) -> ChannelDataset:
    """Generate ``m`` channels, each with freshly drawn cluster parameters.

    With ``normalize`` a single global factor rescales the channels (and the
    stored covariances accordingly) so that the mean of ``||h||^2`` over the
    dataset is exactly ``n_rx * n_tx``.
    """
    if m < 1:
        raise ValueError("dataset size must be positive")
    n_rx, n_tx = config.n_rx, config.n_tx
    samples = np.empty((m, n_rx, n_tx), dtype=complex)
    c_rx = np.empty((m, n_rx, n_rx), dtype=complex)
    c_tx = np.empty((m, n_tx, n_tx), dtype=complex)
    for i in range(m):
        rng = sample_rng(seed, domain, i)
        cov = build_covariance(sample_cluster_params(config, rng), n_rx, n_tx, config.quad_points)
        samples[i] = sample_channel(cov, rng)
        c_rx[i], c_tx[i] = cov.c_rx, cov.c_tx
    scale = 1.0
    if normalize:
        scale = np.sqrt(n_rx * n_tx / np.mean(np.sum(np.abs(samples) ** 2, axis=(1, 2))))
        samples *= scale
        c_rx *= scale ** 2
    return ChannelDataset(samples, c_rx, c_tx, config, seed, domain, {"scale": float(scale)})


def pilot_matrix(n_tx: int) -> np.ndarray:
    """Unitary DFT pilots with ``N_p = n_tx``."""
    return dft_matrix(n_tx)


def observe(h: np.ndarray, pilots: np.ndarray, noise_variance: float, rng=None, noise=None) -> PilotObservation:
    """Received pilots ``Y = H P + N`` with ``N`` i.i.d. ``CN(0, noise_variance)``.

    ``noise`` may supply the unit-variance draw directly (shape of ``Y``), which
    lets several SNR points share one noise realization.  ``h`` may carry
    leading batch axes.
    """
    if noise_variance < 0:
        raise ValueError(f"noise variance must be nonnegative, got {noise_variance}")
    if pilots.shape[0] != pilots.shape[1] or pilots.shape[0] != h.shape[-1]:
        raise ValueError("pilot matrix must be square with N_p = n_tx")
    y = h @ pilots
    if noise_variance > 0:
        if noise is None:
            noise = sample_standard_complex_gaussian(y.shape[-2], y.shape[-1], rng, size=y.shape[:-2] or None)
        y = y + np.sqrt(noise_variance) * noise
    return PilotObservation(y, pilots, float(noise_variance))


# ---------------------------------------------------------------------------
# dataset container ("DMCE")

DATASET_MAGIC = b"DMCE"
DATASET_VERSION = 1
_HEADER = struct.Struct("<4sHHHII")


def save_dataset(dataset: ChannelDataset, path) -> None:
    meta = {"model": dataset.config.to_dict(), "seed": dataset.seed, "domain": dataset.domain,
            **dataset.metadata}
    blob = json.dumps(meta, sort_keys=True).encode()
    m, n_rx, n_tx = dataset.samples.shape
    records = np.concatenate([
        dataset.samples.reshape(m, -1),
        dataset.c_rx.reshape(m, -1),
        dataset.c_tx.reshape(m, -1),
    ], axis=1).astype("<c16")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(DATASET_MAGIC, DATASET_VERSION, n_rx, n_tx, m, len(blob)))
        f.write(blob)
        f.write(records.tobytes())


def load_dataset(path) -> ChannelDataset:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CorruptFileError(f"{path}: truncated dataset header")
    magic, version, n_rx, n_tx, m, blob_len = _HEADER.unpack_from(raw)
    if magic != DATASET_MAGIC:
        raise CorruptFileError(f"{path}: not a channel dataset (magic {magic!r})")
    if version != DATASET_VERSION:
        raise CorruptFileError(f"{path}: unsupported dataset version {version}")
    off = _HEADER.size + blob_len
    if len(raw) < off:
        raise CorruptFileError(f"{path}: truncated dataset metadata")
    try:
        meta = json.loads(raw[_HEADER.size:off].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CorruptFileError(f"{path}: unreadable dataset metadata") from exc
    per = n_rx * n_tx + n_rx * n_rx + n_tx * n_tx
    expected = off + m * per * 16
    if len(raw) != expected:
        raise CorruptFileError(f"{path}: corrupt dataset, expected {expected} bytes, found {len(raw)}")
    rec = np.frombuffer(raw, dtype="<c16", offset=off).reshape(m, per).astype(complex)
    a, b = n_rx * n_tx, n_rx * n_tx + n_rx * n_rx
    config = ChannelModelConfig.from_dict(meta.pop("model"))
    seed, domain = meta.pop("seed"), meta.pop("domain")
    return ChannelDataset(rec[:, :a].reshape(m, n_rx, n_tx), rec[:, a:b].reshape(m, n_rx, n_rx),
                          rec[:, b:].reshape(m, n_tx, n_tx), config, seed, domain, meta)
