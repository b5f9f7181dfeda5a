import struct
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from dmce.baselines import ls_estimate, sample_covariance
from dmce.channels import (ChannelCovariance, ChannelModelConfig, ClusterParams, build_covariance,
                           generate_dataset, load_dataset, observe, pilot_matrix, sample_channel,
                           sample_cluster_params, save_dataset)
from dmce.fileformat import CorruptFileError
from dmce.numerics import fft2, is_hermitian, vec

GOLDEN = Path(__file__).parent / "data" / "golden_2x2_m2.dmce"
GOLDEN_CONFIG = ChannelModelConfig(n_rx=2, n_tx=2, num_clusters=2)


def test_single_cluster_has_unit_power():
    p = sample_cluster_params(ChannelModelConfig(num_clusters=1), np.random.default_rng(0))
    assert p.powers.tolist() == [1.0]


def test_cluster_angles_within_sector():
    cfg = ChannelModelConfig(num_clusters=3, sector_deg=(-60, 60))
    rng = np.random.default_rng(1)
    for _ in range(200):
        p = sample_cluster_params(cfg, rng)
        assert np.all(np.abs(np.rad2deg(np.concatenate([p.rx_angles, p.tx_angles]))) <= 60)
        assert abs(p.powers.sum() - 1) < 1e-12 and np.all(p.powers >= 0)


def test_cluster_angles_uniform_ks():
    cfg = ChannelModelConfig(num_clusters=100_000, sector_deg=(-60, 60))
    p = sample_cluster_params(cfg, np.random.default_rng(2))
    lo, hi = np.deg2rad(-60), np.deg2rad(60)
    assert stats.kstest(p.rx_angles, stats.uniform(lo, hi - lo).cdf).pvalue > 0.01


def test_zero_clusters_rejected():
    with pytest.raises(ValueError):
        sample_cluster_params(ChannelModelConfig(num_clusters=0), np.random.default_rng(0))


def test_narrow_single_cluster_is_rank_one():
    p = ClusterParams(np.array([0.3]), np.array([-0.2]), np.array([1.0]), 1e-6)
    cov = build_covariance(p, 16, 4)
    w = np.linalg.eigvalsh(cov.c_rx)
    assert w[-1] >= 0.99 * w.sum()


def test_broadside_2x2_is_all_ones():
    p = ClusterParams(np.array([0.0]), np.array([0.0]), np.array([1.0]), 1e-9)
    cov = build_covariance(p, 2, 2)
    np.testing.assert_allclose(cov.c_rx, np.ones((2, 2)), atol=1e-12)
    np.testing.assert_allclose(cov.c_tx, np.ones((2, 2)), atol=1e-12)


def test_covariance_contract_random_draws():
    cfg = ChannelModelConfig()
    rng = np.random.default_rng(3)
    for _ in range(50):
        cov = build_covariance(sample_cluster_params(cfg, rng), cfg.n_rx, cfg.n_tx)
        full = cov.full
        assert is_hermitian(full)
        assert np.linalg.eigvalsh(full).min() >= -1e-10 * np.trace(full).real
        assert np.trace(full).real == pytest.approx(cfg.n_rx * cfg.n_tx)


def test_identity_covariance_gives_unit_entries():
    cov = ChannelCovariance(np.eye(4), np.eye(2))
    h = sample_channel(cov, np.random.default_rng(4), size=100_000)
    assert np.mean(np.abs(h) ** 2) == pytest.approx(1.0, rel=0.01)


def test_sample_covariance_converges_to_kronecker_model():
    cfg = ChannelModelConfig(n_rx=4, n_tx=2)
    rng = np.random.default_rng(5)
    cov = build_covariance(sample_cluster_params(cfg, rng), 4, 2)
    h = sample_channel(cov, rng, size=100_000)
    c_hat = sample_covariance(h)
    assert np.linalg.norm(c_hat - cov.full) / np.linalg.norm(cov.full) < 0.05


def test_sample_channel_reproducible():
    cov = build_covariance(sample_cluster_params(ChannelModelConfig(), np.random.default_rng(6)), 16, 4)
    a = sample_channel(cov, np.random.default_rng(9))
    b = sample_channel(cov, np.random.default_rng(9))
    assert a.tobytes() == b.tobytes()


def test_conditionally_gaussian_entries():
    cov = build_covariance(sample_cluster_params(ChannelModelConfig(), np.random.default_rng(7)), 16, 4)
    h = sample_channel(cov, np.random.default_rng(8), size=50_000)
    skew = stats.skew(h.real.reshape(len(h), -1), axis=0)
    assert np.max(np.abs(skew)) < 0.05


def test_dataset_single_sample():
    ds = generate_dataset(ChannelModelConfig(), 1, seed=0)
    assert ds.samples.shape == (1, 16, 4)
    assert ds.c_rx.shape == (1, 16, 16) and ds.c_tx.shape == (1, 4, 4)


def test_dataset_energy_normalization():
    cfg = ChannelModelConfig()
    raw = generate_dataset(cfg, 10_000, seed=1, normalize=False)
    energy = np.mean(np.sum(np.abs(raw.samples) ** 2, axis=(1, 2))) / (cfg.n_rx * cfg.n_tx)
    assert 0.98 <= energy <= 1.02
    normed = generate_dataset(cfg, 2_000, seed=1)
    assert np.mean(np.sum(np.abs(normed.samples) ** 2, axis=(1, 2))) == pytest.approx(64.0, rel=1e-12)
    # stored covariances follow the rescaling
    s2 = normed.metadata["scale"] ** 2
    raw_small = generate_dataset(cfg, 2_000, seed=1, normalize=False)
    np.testing.assert_allclose(normed.c_rx[0], s2 * raw_small.c_rx[0])


def test_dataset_is_non_gaussian_in_angular_domain():
    ds = generate_dataset(ChannelModelConfig(num_clusters=3), 5_000, seed=2)
    # every spatial entry has unit variance for any cluster draw, so the
    # pooled spatial marginal stays Gaussian; the angular domain is heavy-tailed
    assert stats.kurtosis(fft2(ds.samples).real.ravel()) > 1.0
    assert abs(stats.kurtosis(ds.samples.real.ravel())) < 0.1


def test_dataset_independent_of_generation_order():
    cfg = ChannelModelConfig()
    full = generate_dataset(cfg, 5, seed=3, normalize=False)
    head = generate_dataset(cfg, 2, seed=3, normalize=False)
    assert full.samples[:2].tobytes() == head.samples.tobytes()


def test_observe_noiseless_and_identity_pilots():
    rng = np.random.default_rng(10)
    h = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
    p = pilot_matrix(4)
    np.testing.assert_allclose(observe(h, p, 0.0).y, h @ p)
    np.testing.assert_allclose(ls_estimate(observe(h, p, 0.0)), h, atol=1e-12)
    noise = rng.standard_normal((8, 4)) + 0j
    np.testing.assert_allclose(observe(h, np.eye(4), 0.25, noise=noise).y, h + 0.5 * noise)


def test_observe_rejects_negative_noise():
    with pytest.raises(ValueError):
        observe(np.zeros((2, 2)), np.eye(2), -1.0)


def test_pilot_matrix_unitary():
    p = pilot_matrix(4)
    assert np.linalg.norm(p @ p.conj().T - np.eye(4)) < 1e-10


def test_ls_mse_equals_noise_variance():
    rng = np.random.default_rng(11)
    h = rng.standard_normal((10_000, 8, 4)) + 0j
    obs = observe(h, pilot_matrix(4), 0.3, rng)
    mse = np.mean(np.abs(ls_estimate(obs) - h) ** 2)
    assert mse == pytest.approx(0.3, rel=0.03)


def test_dataset_roundtrip(tmp_path):
    ds = generate_dataset(ChannelModelConfig(n_rx=4, n_tx=2), 3, seed=4)
    path = tmp_path / "d.dmce"
    save_dataset(ds, path)
    back = load_dataset(path)
    assert back.samples.tobytes() == ds.samples.tobytes()
    assert back.c_rx.tobytes() == ds.c_rx.tobytes() and back.c_tx.tobytes() == ds.c_tx.tobytes()
    assert back.config == ds.config and back.seed == 4


def test_dataset_truncated(tmp_path):
    ds = generate_dataset(ChannelModelConfig(n_rx=4, n_tx=2), 2, seed=4)
    path = tmp_path / "d.dmce"
    save_dataset(ds, path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(CorruptFileError):
        load_dataset(path)
    path.write_bytes(b"XXXX" + bytes(20))
    with pytest.raises(CorruptFileError):
        load_dataset(path)


def test_golden_dataset_layout(tmp_path):
    raw = GOLDEN.read_bytes()
    magic, version, n_rx, n_tx, m, blob_len = struct.unpack_from("<4sHHHII", raw)
    assert (magic, version, n_rx, n_tx, m) == (b"DMCE", 1, 2, 2, 2)
    # record = 4 channel entries + 4 C_rx entries + 4 C_tx entries, each (re, im) float64
    assert len(raw) == 18 + blob_len + m * 12 * 16
    first = np.frombuffer(raw, "<f8", count=2, offset=18 + blob_len)
    ds = load_dataset(GOLDEN)
    assert complex(*first) == ds.samples[0, 0, 0]
    # regenerating with the stored seed reproduces the file byte for byte
    fresh = generate_dataset(GOLDEN_CONFIG, 2, seed=7)
    save_dataset(fresh, tmp_path / "g.dmce")
    assert (tmp_path / "g.dmce").read_bytes() == raw
