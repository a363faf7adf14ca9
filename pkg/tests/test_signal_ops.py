"""Tests for blur, decimation, shifts, FFT, noise, alias ratio and bicubic resampling."""

import math
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

import numpy as np
import pytest

from raster import make_rng
from signal_ops import (
    add_noise,
    alias_energy_ratio,
    bicubic_upsample2,
    blur,
    cubic_matrix,
    decimate2,
    fft,
    fft2,
    gaussian_kernel,
    ifft2,
    resample_bicubic,
    shift_integer,
    spline_shift,
)


def brute_dft2(x):
    h, w = x.shape
    fh = np.exp(-2j * np.pi * np.outer(np.arange(h), np.arange(h)) / h)
    fw = np.exp(-2j * np.pi * np.outer(np.arange(w), np.arange(w)) / w)
    return fh @ x @ fw.T


def test_gaussian_kernel_shape_and_gain():
    k = gaussian_kernel(0.7)
    assert k.radius == math.ceil(4 * 0.7)
    assert k.taps.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(k.taps, k.taps[::-1])
    assert gaussian_kernel(0).taps.tolist() == [1.0]
    with pytest.raises(ValueError):
        gaussian_kernel(-1)


def test_blur_preserves_constants_and_rejects_nan():
    x = np.full((9, 7), 123.0)
    assert np.allclose(blur(x, gaussian_kernel(2.4)), 123.0)
    x[2, 2] = np.nan
    with pytest.raises(ValueError):
        blur(x, gaussian_kernel(1.0))


def test_blur_identity_for_zero_sigma():
    x = np.random.default_rng(0).random((5, 6))
    assert np.array_equal(blur(x, gaussian_kernel(0)), x)


def test_decimate2_phases():
    x = np.arange(16.0).reshape(4, 4)
    assert decimate2(x).tolist() == [[0.0, 2.0], [8.0, 10.0]]
    assert decimate2(x, 1, 1).tolist() == [[5.0, 7.0], [13.0, 15.0]]
    with pytest.raises(ValueError):
        decimate2(np.zeros((3, 4)))


def test_shift_integer_convention_and_edges():
    x = np.arange(25.0).reshape(5, 5)
    y = shift_integer(x, 1, -1)
    assert y[2, 2] == x[1, 3]
    assert np.array_equal(y[0], y[1])
    assert np.array_equal(y[:, -1], y[:, -2])
    with pytest.raises(ValueError):
        shift_integer(x, 5, 0)


def test_spline_shift_zero_is_identity():
    x = np.random.default_rng(1).random((12, 10))
    assert np.allclose(spline_shift(x, 0.0, 0.0), x, atol=1e-9)


def test_spline_shift_integer_translates_and_zero_fills():
    x = np.random.default_rng(2).random((10, 10))
    y = spline_shift(x, 1.0, 0.0)
    assert np.allclose(y[1:], x[:-1], atol=1e-9)
    assert np.all(y[0] == 0.0)


def test_spline_half_shift_round_trip_on_smooth_signal():
    i, j = np.mgrid[0:40, 0:40]
    x = np.sin(2 * np.pi * i / 20.0) + np.cos(2 * np.pi * j / 16.0)
    y = spline_shift(spline_shift(x, 0.5, -0.5), -0.5, 0.5)
    assert np.max(np.abs(y - x)[8:-8, 8:-8]) < 1e-3


def test_spline_shift_bound():
    with pytest.raises(ValueError):
        spline_shift(np.zeros((4, 4)), 8.5, 0)


@pytest.mark.parametrize("shape", [(8, 8), (6, 10)])
def test_fft2_matches_brute_force(shape):
    x = np.random.default_rng(3).normal(size=shape)
    assert np.max(np.abs(fft2(x) - brute_dft2(x))) < 1e-6


def test_ifft2_inverts():
    x = np.random.default_rng(4).normal(size=(12, 16))
    assert np.allclose(ifft2(fft2(x)).real, x, atol=1e-9)


def test_parseval():
    x = np.random.default_rng(5).normal(size=(32, 32))
    energy = np.sum(np.abs(fft2(x)) ** 2) / x.size
    assert energy == pytest.approx(np.sum(x**2), rel=1e-3)


def test_fft_rejects_empty():
    with pytest.raises(ValueError):
        fft2(np.zeros((0, 4)))
    with pytest.raises(ValueError):
        fft(np.zeros(0))


def test_add_noise_level():
    x = np.zeros((256, 256))
    assert np.array_equal(add_noise(x, 0.0, make_rng(0)), x)
    n = add_noise(x, 0.001, make_rng(0))
    assert n.std() == pytest.approx(4.095, rel=0.05)
    with pytest.raises(ValueError):
        add_noise(x, -0.1, make_rng(0))


def test_alias_energy_ratio_extremes():
    i, j = np.mgrid[0:32, 0:32]
    assert alias_energy_ratio(np.full((32, 32), 5.0)) == 0.0
    assert alias_energy_ratio((-1.0) ** (i + j)) == pytest.approx(1.0)
    assert alias_energy_ratio(np.sin(2 * np.pi * i / 16.0)) == pytest.approx(0.0, abs=1e-9)


def test_cubic_matrix_partition_of_unity():
    m = cubic_matrix(7, 14)
    assert m.shape == (14, 7)
    assert np.allclose(m.sum(axis=1), 1.0)


def test_bicubic_upsample_constant_and_shape():
    x = np.full((2, 5, 6), 300.0)
    y = bicubic_upsample2(x)
    assert y.shape == (2, 10, 12)
    assert np.allclose(y, 300.0)
    assert resample_bicubic(np.ones((4, 4)), (3, 5)).shape == (3, 5)


def test_blur_matches_dense_2d_convolution():
    x = np.random.default_rng(20).random((16, 16))
    k = gaussian_kernel(0.8)
    r = len(k.taps) // 2
    dense = np.outer(k.taps, k.taps)
    xp = np.pad(x, r, mode="symmetric")
    want = np.array([[np.sum(dense * xp[i : i + 2 * r + 1, j : j + 2 * r + 1]) for j in range(16)] for i in range(16)])
    assert np.max(np.abs(blur(x, k) - want)) < 1e-4


def test_blur_is_linear():
    rng = np.random.default_rng(21)
    x, y = rng.random((20, 24)), rng.random((20, 24))
    k = gaussian_kernel(1.5)
    assert np.allclose(blur(2.5 * x - 0.75 * y, k), 2.5 * blur(x, k) - 0.75 * blur(y, k), atol=1e-4)


def test_blur_commutes_with_integer_shift_on_interior():
    x = np.random.default_rng(22).random((32, 32))
    k = gaussian_kernel(1.0)
    a = shift_integer(blur(x, k), 1, -2)
    b = blur(shift_integer(x, 1, -2), k)
    assert np.allclose(a[8:-8, 8:-8], b[8:-8, 8:-8], atol=1e-9)


def test_spline_half_shift_reproduces_a_ramp():
    i, j = np.mgrid[0:40, 0:40].astype(np.float64)
    ramp = 1.0 * i + 0.5 * j
    y = spline_shift(ramp, 0.5, 0.0)
    assert np.max(np.abs(y - (ramp - 0.5))[10:-10, 10:-10]) < 1e-3
