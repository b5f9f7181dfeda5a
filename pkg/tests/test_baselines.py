import numpy as np
import pytest

from dmce.baselines import (GMMConfig, GMMModel, covariance_model, fit_gmm, genie_estimate, genie_mse,
                            gmm_estimate, gmm_responsibilities, lmmse_estimate, load_gmm, sample_covariance,
                            save_gmm)
from dmce.channels import ChannelModelConfig, build_covariance, sample_channel, sample_cluster_params
from dmce.fileformat import CorruptFileError
from dmce.numerics import sample_standard_complex_gaussian, vec


def _mixture_draws(rng, n, weights, means, covs):
    labels = rng.choice(len(weights), size=n, p=weights)
    x = np.empty((n, means.shape[1]), dtype=complex)
    for k in range(len(weights)):
        idx = np.flatnonzero(labels == k)
        w = sample_standard_complex_gaussian(means.shape[1], rng=rng, size=len(idx))
        x[idx] = means[k] + w @ np.linalg.cholesky(covs[k]).T
    return x, labels


def test_lmmse_scaled_identity():
    y = np.array([1.0 + 1j, -2.0, 0.5j])
    np.testing.assert_allclose(lmmse_estimate(y, 3 * np.eye(3), 1.0), 0.75 * y)
    np.testing.assert_allclose(lmmse_estimate(y, np.eye(3), 1e-12), y, atol=1e-10)


def test_lmmse_is_linear_and_batched():
    rng = np.random.default_rng(0)
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    c = g @ g.conj().T
    a = sample_standard_complex_gaussian(4, rng=rng, size=5)
    b = sample_standard_complex_gaussian(4, rng=rng, size=5)
    lhs = lmmse_estimate(2 * a - 1j * b, c, 0.3)
    np.testing.assert_allclose(lhs, 2 * lmmse_estimate(a, c, 0.3) - 1j * lmmse_estimate(b, c, 0.3), atol=1e-12)
    np.testing.assert_allclose(lhs[2], lmmse_estimate(2 * a[2] - 1j * b[2], c, 0.3), atol=1e-12)


def test_sample_covariance_of_basis_vectors():
    h = np.eye(3, dtype=complex)
    np.testing.assert_allclose(sample_covariance(h), np.eye(3) / 3)
    with pytest.raises(ValueError):
        sample_covariance(np.zeros((0, 3)))


def test_genie_analytic_mse_matches_monte_carlo():
    rng = np.random.default_rng(1)
    cov = build_covariance(sample_cluster_params(ChannelModelConfig(n_rx=8, n_tx=4), rng), 8, 4)
    m, eta2 = 20_000, 0.1
    h = vec(sample_channel(cov, rng, size=m))
    y = h + np.sqrt(eta2) * sample_standard_complex_gaussian(32, rng=rng, size=m)
    c_rx = np.broadcast_to(cov.c_rx, (m, 8, 8))
    c_tx = np.broadcast_to(cov.c_tx, (m, 4, 4))
    est = lmmse_estimate(y, cov.full, eta2)
    np.testing.assert_allclose(genie_estimate(y[:3], c_rx, c_tx, eta2), est[:3], atol=1e-12)
    mse = np.mean(np.abs(est - h) ** 2)
    assert mse == pytest.approx(genie_mse(cov.c_rx, cov.c_tx, eta2), rel=0.03)
    # a mismatched covariance does worse
    wrong = lmmse_estimate(y, np.eye(32), eta2)
    assert np.mean(np.abs(wrong - h) ** 2) > mse


def test_single_component_fit_equals_sample_moments():
    rng = np.random.default_rng(2)
    x = 1.0 + 0.5j + sample_standard_complex_gaussian(3, rng=rng, size=500)
    model = fit_gmm(x, GMMConfig(n_components=1, reg=0.0), rng)
    np.testing.assert_allclose(model.means[0], x.mean(axis=0), atol=1e-12)
    d = x - x.mean(axis=0)
    np.testing.assert_allclose(model.covariances[0], d.T @ d.conj() / len(x), atol=1e-12)
    assert model.weights.tolist() == [1.0]


def test_two_cluster_recovery():
    rng = np.random.default_rng(3)
    means = np.array([[5.0, 5.0], [-5.0, -5.0]], dtype=complex)
    covs = np.array([np.eye(2), 2 * np.eye(2)], dtype=complex)
    x, _ = _mixture_draws(rng, 5000, [0.3, 0.7], means, covs)
    model = fit_gmm(x, GMMConfig(n_components=2), rng)
    order = np.argsort(model.weights)
    np.testing.assert_allclose(model.weights[order], [0.3, 0.7], atol=0.03)
    np.testing.assert_allclose(model.means[order], means, atol=0.15)
    np.testing.assert_allclose(model.covariances[order], covs, atol=0.2)


def test_log_likelihood_non_decreasing():
    rng = np.random.default_rng(4)
    means = sample_standard_complex_gaussian(4, rng=rng, size=3) * 2
    covs = np.array([np.eye(4)] * 3, dtype=complex)
    x, _ = _mixture_draws(rng, 2000, [0.2, 0.3, 0.5], means, covs)
    model = fit_gmm(x, GMMConfig(n_components=3, max_iter=50, tol=0.0), rng)
    ll = np.array(model.log_likelihood)
    assert len(ll) >= 3
    assert np.all(np.diff(ll) >= -1e-9 * np.abs(ll[1:]))


def test_fit_rejects_too_few_samples():
    with pytest.raises(ValueError):
        fit_gmm(np.zeros((3, 2), complex), GMMConfig(n_components=4), np.random.default_rng(0))


def test_responsibilities_are_distributions():
    rng = np.random.default_rng(5)
    model = GMMModel(np.array([0.5, 0.5]), np.array([[3.0, 0], [-3.0, 0]], dtype=complex),
                     np.array([np.eye(2)] * 2, dtype=complex))
    y = np.array([[3.0, 0], [-3.0, 0], [0.0, 0]], dtype=complex)
    r = gmm_responsibilities(y, model, 0.1)
    np.testing.assert_allclose(r.sum(axis=1), 1.0)
    assert r[0, 0] > 0.999 and r[1, 1] > 0.999
    np.testing.assert_allclose(r[2], [0.5, 0.5])
    assert np.all(np.isfinite(gmm_responsibilities(1e3 * sample_standard_complex_gaussian(2, rng=rng, size=4),
                                                   model, 1e-3)))


def test_one_component_estimator_is_lmmse():
    rng = np.random.default_rng(6)
    g = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    c = g @ g.conj().T
    y = sample_standard_complex_gaussian(4, rng=rng, size=6)
    np.testing.assert_allclose(gmm_estimate(y, covariance_model(c), 0.2), lmmse_estimate(y, c, 0.2), atol=1e-12)
    with pytest.raises(ValueError):
        gmm_estimate(np.zeros((2, 3)), covariance_model(c), 0.2)


def test_true_mixture_estimator_beats_single_gaussian():
    rng = np.random.default_rng(7)
    weights = np.array([0.5, 0.5])
    means = np.zeros((2, 4), dtype=complex)
    covs = np.array([np.diag([4.0, 4.0, 0.01, 0.01]), np.diag([0.01, 0.01, 4.0, 4.0])], dtype=complex)
    h, labels = _mixture_draws(rng, 20_000, weights, means, covs)
    eta2 = 0.5
    y = h + np.sqrt(eta2) * sample_standard_complex_gaussian(4, rng=rng, size=len(h))
    mix = np.mean(np.abs(gmm_estimate(y, GMMModel(weights, means, covs), eta2) - h) ** 2)
    lin = np.mean(np.abs(lmmse_estimate(y, sample_covariance(h), eta2) - h) ** 2)
    assert mix < lin
    # a genie that knows the active component lower-bounds the mixture estimator
    genie = np.empty_like(y)
    for k in range(2):
        genie[labels == k] = lmmse_estimate(y[labels == k], covs[k], eta2)
    assert np.mean(np.abs(genie - h) ** 2) <= mix


def test_gmm_roundtrip(tmp_path):
    rng = np.random.default_rng(8)
    x = sample_standard_complex_gaussian(3, rng=rng, size=200)
    model = fit_gmm(x, GMMConfig(n_components=2, max_iter=5), rng, shape=(3, 1))
    path = tmp_path / "m.dmgm"
    save_gmm(model, path)
    back = load_gmm(path)
    for a, b in [(model.weights, back.weights), (model.means, back.means), (model.covariances, back.covariances)]:
        assert a.tobytes() == b.tobytes()
    assert back.shape == (3, 1) and back.log_likelihood == model.log_likelihood
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CorruptFileError):
        load_gmm(path)
