"""Reference estimators: LS, LMMSE with sample or genie covariance, and the GMM estimator.

Vectors are column-stacked channels ``h = vec(H)``; functions taking ``y``
accept a single vector ``(N,)`` or a batch ``(B, N)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from scipy.cluster.vq import kmeans2
from scipy.special import logsumexp

from .fileformat import CorruptFileError, read_container, write_container
from .numerics import hermitian_solve, vec

log = logging.getLogger(__name__)

GMM_MAGIC = b"DMGM"
GMM_VERSION = 1


def ls_estimate(obs) -> np.ndarray:
    """Pilot decorrelation ``Y P^H``; equals ``H`` plus white noise for unitary pilots."""
    return obs.y @ obs.pilots.conj().T


def sample_covariance(h: np.ndarray) -> np.ndarray:
    """``(1/M) sum h h^H`` over rows of ``h`` (``(M, N)`` vectors or ``(M, n_rx, n_tx)`` channels)."""
    h = np.asarray(h)
    if h.ndim == 3:
        h = vec(h)
    if len(h) == 0:
        raise ValueError("need at least one sample")
    c = h.T @ h.conj() / len(h)
    return 0.5 * (c + c.conj().T)


def lmmse_estimate(y: np.ndarray, cov: np.ndarray, noise_variance: float) -> np.ndarray:
    """``C (C + eta2 I)^{-1} y`` computed with a Cholesky solve."""
    y = np.asarray(y)
    a = cov + noise_variance * np.eye(cov.shape[0])
    x = hermitian_solve(a, y.T)
    return (cov @ x).T


def genie_estimate(y: np.ndarray, c_rx: np.ndarray, c_tx: np.ndarray, noise_variance: float) -> np.ndarray:
    """LMMSE with every sample's own covariance ``C_tx^T kron C_rx``.

    ``y`` is ``(B, N)``; ``c_rx``/``c_tx`` carry the matching batch axis.
    """
    out = np.empty_like(y)
    for i in range(len(y)):
        out[i] = lmmse_estimate(y[i], np.kron(c_tx[i].T, c_rx[i]), noise_variance)
    return out


def genie_mse(c_rx: np.ndarray, c_tx: np.ndarray, noise_variance: float) -> float:
    """Expected normalized MSE of the genie estimator for one covariance."""
    lam = np.outer(np.linalg.eigvalsh(c_tx), np.linalg.eigvalsh(c_rx)).ravel()
    lam = np.clip(lam, 0, None)
    return float(np.sum(lam * noise_variance / (lam + noise_variance)) / lam.size)


@dataclass
class GMMModel:
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood: list = field(default_factory=list)
    shape: tuple[int, int] | None = None

    @property
    def n_components(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass(frozen=True)
class GMMConfig:
    n_components: int = 16
    max_iter: int = 100
    tol: float = 1e-6
    reg: float = 1e-6
    init_subsample: int = 2000
    zero_mean: bool = False

    @classmethod
    def from_dict(cls, d: dict) -> "GMMConfig":
        return cls(**d)


def _component_log_pdf(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """``log CN(x; mean, cov)`` for the rows of ``x``."""
    chol = linalg.cholesky(cov, lower=True, check_finite=False)
    z = linalg.solve_triangular(chol, (x - mean).T, lower=True, check_finite=False)
    quad = np.sum(np.abs(z) ** 2, axis=0)
    logdet = 2 * np.sum(np.log(np.diag(chol).real))
    return -x.shape[1] * np.log(np.pi) - logdet - quad


def _log_joint(x, weights, means, covs):
    logp = np.empty((len(x), len(weights)))
    with np.errstate(divide="ignore"):
        logw = np.log(weights)
    for k in range(len(weights)):
        logp[:, k] = logw[k] + _component_log_pdf(x, means[k], covs[k])
    return logp


def _m_step(x, resp, reg, zero_mean):
    nk = resp.sum(axis=0)
    weights = nk / len(x)
    dim = x.shape[1]
    means = np.zeros((len(nk), dim), dtype=complex)
    covs = np.empty((len(nk), dim, dim), dtype=complex)
    for k in range(len(nk)):
        if nk[k] <= 0:
            covs[k] = reg * np.eye(dim)
            continue
        if not zero_mean:
            means[k] = resp[:, k] @ x / nk[k]
        d = x - means[k]
        c = (d.T * resp[:, k]) @ d.conj() / nk[k]
        covs[k] = 0.5 * (c + c.conj().T) + reg * np.eye(dim)
    return weights, means, covs


def _kmeanspp_init(x, k, cfg, rng):
    n = min(len(x), max(cfg.init_subsample, k))
    sub = x[rng.choice(len(x), n, replace=False)]
    feats = np.concatenate([sub.real, sub.imag], axis=1)
    centres, _ = kmeans2(feats, k, minit="++", seed=rng)
    allf = np.concatenate([x.real, x.imag], axis=1)
    d2 = (np.sum(allf ** 2, axis=1)[:, None] - 2 * allf @ centres.T + np.sum(centres ** 2, axis=1)[None, :])
    labels = np.argmin(d2, axis=1)
    resp = np.zeros((len(x), k))
    resp[np.arange(len(x)), labels] = 1.0
    return resp


def fit_gmm(h: np.ndarray, config: GMMConfig, rng, shape: tuple[int, int] | None = None) -> GMMModel:
    """EM fit of a complex Gaussian mixture with full covariances.

    Covariances get ``reg * trace(C)/dim`` added on the diagonal, with ``C``
    the global sample covariance.  A component whose weight falls below 1e-8
    is reseeded once (random sample as mean, global covariance); a second
    collapse raises ``RuntimeError``.
    """
    h = np.asarray(h)
    if h.ndim == 3:
        shape = shape or h.shape[1:]
        h = vec(h)
    k = config.n_components
    if len(h) < k:
        raise ValueError(f"need at least {k} samples for {k} components, got {len(h)}")
    c_global = sample_covariance(h)
    reg = config.reg * np.trace(c_global).real / h.shape[1]
    resp = _kmeanspp_init(h, k, config, rng) if k > 1 else np.ones((len(h), 1))
    weights, means, covs = _m_step(h, resp, reg, config.zero_mean)
    reseeded = np.zeros(k, dtype=bool)
    trace = []
    for it in range(config.max_iter):
        for j in np.flatnonzero(weights < 1e-8):
            if reseeded[j]:
                raise RuntimeError(f"mixture component {j} collapsed twice")
            reseeded[j] = True
            log.warning("reseeding collapsed component %d", j)
            means[j] = 0 if config.zero_mean else h[rng.integers(len(h))]
            covs[j] = c_global + reg * np.eye(h.shape[1])
            weights[j] = 1.0 / k
            weights /= weights.sum()
        logp = _log_joint(h, weights, means, covs)
        norm = logsumexp(logp, axis=1)
        trace.append(float(norm.mean()))
        resp = np.exp(logp - norm[:, None])
        if it > 0 and abs(trace[-1] - trace[-2]) <= config.tol * abs(trace[-1]):
            break
        weights, means, covs = _m_step(h, resp, reg, config.zero_mean)
    return GMMModel(weights, means, covs, trace, tuple(shape) if shape is not None else None)


def gmm_responsibilities(y: np.ndarray, model: GMMModel, noise_variance: float) -> np.ndarray:
    """Posterior component probabilities under ``y ~ sum_k w_k CN(mu_k, C_k + eta2 I)``."""
    y = np.atleast_2d(y)
    eye = np.eye(model.dim)
    logp = _log_joint(y, model.weights, model.means, model.covariances + noise_variance * eye)
    return np.exp(logp - logsumexp(logp, axis=1, keepdims=True))


def gmm_estimate(y: np.ndarray, model: GMMModel, noise_variance: float) -> np.ndarray:
    """Responsibility-weighted combination of per-component LMMSE estimates."""
    y = np.asarray(y)
    single = y.ndim == 1
    y = np.atleast_2d(y)
    if y.shape[1] != model.dim:
        raise ValueError(f"observation dimension {y.shape[1]} does not match model dimension {model.dim}")
    resp = gmm_responsibilities(y, model, noise_variance)
    out = np.zeros_like(y, dtype=complex)
    for k in range(model.n_components):
        mu = model.means[k]
        est = mu + lmmse_estimate(y - mu, model.covariances[k], noise_variance)
        out += resp[:, k:k + 1] * est
    return out[0] if single else out


def save_gmm(model: GMMModel, path) -> None:
    k, n = model.means.shape
    payload = np.concatenate([
        model.weights,
        model.means.view(np.float64).ravel(),
        model.covariances.view(np.float64).ravel(),
    ])
    meta = {"n_components": k, "dim": n, "shape": list(model.shape) if model.shape else None,
            "log_likelihood": model.log_likelihood}
    write_container(path, GMM_MAGIC, GMM_VERSION, meta, payload)


def load_gmm(path) -> GMMModel:
    meta, payload = read_container(path, GMM_MAGIC, GMM_VERSION)
    try:
        k, n = int(meta["n_components"]), int(meta["dim"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFileError(f"{path}: missing mixture dimensions") from exc
    expected = k + 2 * k * n + 2 * k * n * n
    if payload.size != expected:
        raise CorruptFileError(f"{path}: expected {expected} values, found {payload.size}")
    weights = payload[:k].copy()
    means = payload[k:k + 2 * k * n].view(complex).reshape(k, n).copy()
    covs = payload[k + 2 * k * n:].view(complex).reshape(k, n, n).copy()
    shape = tuple(meta["shape"]) if meta.get("shape") else None
    return GMMModel(weights, means, covs, list(meta.get("log_likelihood", [])), shape)


def covariance_model(cov: np.ndarray, shape=None) -> GMMModel:
    """Wrap a single zero-mean covariance (e.g. the sample covariance) as a one-component model."""
    return GMMModel(np.ones(1), np.zeros((1, cov.shape[0]), dtype=complex), cov[None].copy(), [], shape)
