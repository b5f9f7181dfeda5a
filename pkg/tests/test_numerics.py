import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dmce.numerics import (channels_to_complex, complex_to_channels, dft_matrix, fft2, hermitian_solve, ifft2,
                           sample_standard_complex_gaussian, unvec, vec)


def test_dft_matrix_small_cases():
    np.testing.assert_allclose(dft_matrix(1), [[1.0]])
    np.testing.assert_allclose(dft_matrix(2), np.array([[1, 1], [1, -1]]) / np.sqrt(2), atol=1e-15)


@pytest.mark.parametrize("n", range(1, 65))
def test_dft_matrix_unitary(n):
    f = dft_matrix(n)
    assert np.linalg.norm(f @ f.conj().T - np.eye(n)) < 1e-12


def test_dft_matrix_rejects_zero():
    with pytest.raises(ValueError):
        dft_matrix(0)


def test_fft2_matches_dft_matrix_products():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
    expected = dft_matrix(8) @ x @ dft_matrix(4).T
    np.testing.assert_allclose(fft2(x), expected, atol=1e-12)


def test_fft2_zero_and_dc():
    assert np.all(fft2(np.zeros((4, 4))) == 0)
    spectrum = fft2(np.ones((4, 4)))
    assert abs(spectrum[0, 0]) == pytest.approx(4.0)
    rest = spectrum.copy()
    rest[0, 0] = 0
    assert np.max(np.abs(rest)) < 1e-12


shapes = st.tuples(st.integers(1, 16), st.integers(1, 16))


@settings(max_examples=50, deadline=None)
@given(shapes, st.integers(0, 2**32 - 1))
def test_fft2_roundtrip_and_parseval(shape, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    y = fft2(x)
    assert np.linalg.norm(ifft2(y) - x) < 1e-10
    assert abs(np.linalg.norm(y) - np.linalg.norm(x)) < 1e-10


def test_fft2_batched_axes():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((3, 8, 4)) + 1j * rng.standard_normal((3, 8, 4))
    np.testing.assert_allclose(fft2(x)[1], fft2(x[1]))


def test_hermitian_solve_trivial():
    b = np.arange(6.0).reshape(3, 2) + 1j
    np.testing.assert_allclose(hermitian_solve(np.eye(3), b), b)
    np.testing.assert_allclose(hermitian_solve(2 * np.eye(3), b), b / 2)


def test_hermitian_solve_against_explicit_inverse():
    rng = np.random.default_rng(2)
    g = rng.standard_normal((6, 6)) + 1j * rng.standard_normal((6, 6))
    a = g @ g.conj().T + 0.1 * np.eye(6)
    b = rng.standard_normal((6, 3)) + 1j * rng.standard_normal((6, 3))
    x = hermitian_solve(a, b)
    np.testing.assert_allclose(x, np.linalg.inv(a) @ b, rtol=1e-9, atol=1e-12)
    assert np.linalg.norm(a @ x - b) / np.linalg.norm(b) <= 1e-8


def test_hermitian_solve_errors():
    with pytest.raises(ValueError):
        hermitian_solve(np.array([[1.0, 2.0], [0.0, 1.0]]), np.ones(2))
    with pytest.raises(np.linalg.LinAlgError):
        hermitian_solve(np.array([[1.0, 0.0], [0.0, -1.0]]), np.ones(2))


def test_complex_gaussian_moments():
    rng = np.random.default_rng(3)
    z = sample_standard_complex_gaussian(1000, 1000, rng)
    assert abs(np.mean(np.abs(z) ** 2) - 1.0) < 0.01
    assert np.var(z.real) == pytest.approx(0.5, rel=0.01)
    sigma = 1 / np.sqrt(z.size)
    assert abs(z.mean().real) < 3 * sigma * np.sqrt(0.5) and abs(z.mean().imag) < 3 * sigma * np.sqrt(0.5)


def test_complex_gaussian_deterministic():
    a = sample_standard_complex_gaussian(4, 3, np.random.default_rng(7))
    b = sample_standard_complex_gaussian(4, 3, np.random.default_rng(7))
    assert a.tobytes() == b.tobytes()


def test_stacking_and_vec_bijections():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((5, 8, 4)) + 1j * rng.standard_normal((5, 8, 4))
    stacked = complex_to_channels(x)
    assert stacked.shape == (5, 2, 8, 4)
    assert channels_to_complex(stacked).tobytes() == x.tobytes()
    v = vec(x)
    np.testing.assert_array_equal(v[2], x[2].flatten(order="F"))
    np.testing.assert_array_equal(unvec(v, 8, 4), x)
