"""Numerical helpers shared by the channel, diffusion and estimator code.

Complex matrices are plain ``numpy`` arrays of dtype ``complex128``.  Every
routine accepts a stack of matrices with leading batch axes where that makes
sense, i.e. shape ``(..., rows, cols)``.
"""
from __future__ import annotations

import numpy as np
from scipy import linalg

HERMITIAN_TOL = 1e-10


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix with entries ``exp(-2j*pi*m*k/n) / sqrt(n)``."""
    if n < 1:
        raise ValueError(f"DFT size must be positive, got {n}")
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def fft2(x: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT over the last two axes (spatial -> angular domain).

    Equivalent to ``F_rx @ x @ F_tx.T`` with unitary DFT matrices, so the
    Frobenius norm and white noise statistics are preserved.
    """
    return np.fft.fft2(x, axes=(-2, -1), norm="ortho")


def ifft2(x: np.ndarray) -> np.ndarray:
    """Exact inverse of :func:`fft2`."""
    return np.fft.ifft2(x, axes=(-2, -1), norm="ortho")


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    a = np.asarray(a)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    return bool(np.max(np.abs(a - np.swapaxes(a, -1, -2).conj()), initial=0.0) <= tol * scale)


def hermitian_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``a @ x = b`` for Hermitian positive definite ``a`` via Cholesky.

    Raises
    ------
    ValueError
        If ``a`` is not square and Hermitian within tolerance.
    numpy.linalg.LinAlgError
        If the Cholesky factorization fails, i.e. ``a`` is indefinite.
    """
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not is_hermitian(a):
        raise ValueError("matrix is not Hermitian")
    try:
        factor = linalg.cho_factor(a, lower=True, check_finite=False)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"Cholesky factorization failed: {exc}") from exc
    return linalg.cho_solve(factor, b, check_finite=False)


def psd_sqrt(a: np.ndarray) -> np.ndarray:
    """Factor ``L`` with ``L @ L^H = a`` for Hermitian PSD ``a``.

    Eigenvalue based rather than Cholesky so rank deficient covariances (tiny
    angular spreads) still factor; negative round-off eigenvalues are clipped.
    """
    w, v = np.linalg.eigh(a)
    if w.min() < -1e-8 * max(abs(w).max(), 1.0):
        raise np.linalg.LinAlgError(f"matrix is not PSD (min eigenvalue {w.min():.3e})")
    return v * np.sqrt(np.clip(w, 0.0, None))[None, :]


def sample_standard_complex_gaussian(rows: int, cols: int | None = None, rng=None, size=None) -> np.ndarray:
    """Draw i.i.d. ``CN(0, 1)`` entries (real and imaginary parts ``N(0, 1/2)``).

    ``size`` adds leading batch axes: the result has shape ``(*size, rows, cols)``.
    Without ``cols`` a vector of length ``rows`` is returned.
    """
    rng = np.random.default_rng() if rng is None else rng
    shape = (rows,) if cols is None else (rows, cols)
    if size is not None:
        shape = tuple(np.atleast_1d(size)) + shape
    z = rng.standard_normal(shape + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(0.5)


def vec(h: np.ndarray) -> np.ndarray:
    """Column-stacking vectorization over the last two axes."""
    h = np.asarray(h)
    return np.swapaxes(h, -1, -2).reshape(h.shape[:-2] + (-1,))


def unvec(v: np.ndarray, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v)
    return np.swapaxes(v.reshape(v.shape[:-1] + (cols, rows)), -1, -2)


def complex_to_channels(x: np.ndarray) -> np.ndarray:
    """Stack real and imaginary parts: ``(B, H, W)`` complex -> ``(B, 2, H, W)`` real."""
    return np.stack([x.real, x.imag], axis=-3)


def channels_to_complex(x: np.ndarray) -> np.ndarray:
    return x[..., 0, :, :] + 1j * x[..., 1, :, :]
