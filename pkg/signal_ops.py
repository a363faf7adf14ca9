"""Numerical kernels shared by the acquisition simulator and the registration pipeline.

All operations take 2-D float arrays and return new arrays (float64); inputs are never modified.
Boundary policy: mirror for blur, edge replication for integer shifts, zeros for spline resampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from raster import PEAK, Rng

SPLINE_POLE = math.sqrt(3.0) - 2.0
SPLINE_TOL = 1e-12
MAX_INTEGER_SHIFT = 4
MAX_SPLINE_SHIFT = 8.0
ALIAS_CUTOFF = 0.25
KEYS_A = -0.5

Spectrum = np.ndarray


@dataclass(frozen=True, eq=False)
class Kernel1D:
    """Odd-length symmetric filter with unit DC gain."""

    taps: np.ndarray
    sigma: float

    @property
    def radius(self) -> int:
        return len(self.taps) // 2


def gaussian_kernel(sigma: float) -> Kernel1D:
    """Sampled Gaussian, radius ceil(4*sigma), normalized to sum 1. sigma=0 is the identity."""
    if sigma < 0:
        raise ValueError(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return Kernel1D(np.ones(1), 0.0)
    radius = math.ceil(4.0 * sigma)
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-(k**2) / (2.0 * sigma**2))
    return Kernel1D(taps / taps.sum(), float(sigma))


def _as_band(band: np.ndarray) -> np.ndarray:
    x = np.asarray(band, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D band, got shape {x.shape}")
    return x


def _filter_axis(x: np.ndarray, taps: np.ndarray, axis: int) -> np.ndarray:
    r = len(taps) // 2
    if r == 0:
        return x * taps[0]
    pad = [(0, 0)] * x.ndim
    pad[axis] = (r, r)
    xp = np.pad(x, pad, mode="symmetric")
    n = x.shape[axis]
    out = np.zeros_like(x)
    for k, t in enumerate(taps):
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(k, k + n)
        out += t * xp[tuple(sl)]
    return out


def blur(band: np.ndarray, k: Kernel1D) -> np.ndarray:
    """Separable convolution, rows then columns, mirror boundary."""
    x = _as_band(band)
    if not np.isfinite(x).all():
        raise ValueError("blur input contains NaN or Inf")
    return _filter_axis(_filter_axis(x, k.taps, axis=1), k.taps, axis=0)


def decimate2(band: np.ndarray, phase_row: int = 0, phase_col: int = 0) -> np.ndarray:
    """Keep samples (2i + phase_row, 2j + phase_col)."""
    x = _as_band(band)
    if x.shape[0] % 2 or x.shape[1] % 2:
        raise ValueError(f"decimate2 needs even dimensions, got {x.shape}")
    if phase_row not in (0, 1) or phase_col not in (0, 1):
        raise ValueError("decimation phases must be 0 or 1")
    return x[phase_row::2, phase_col::2].copy()


def shift_integer(band: np.ndarray, dr: int, dc: int) -> np.ndarray:
    """out(i, j) = in(i - dr, j - dc), edge replication outside the domain."""
    x = _as_band(band)
    if abs(dr) > MAX_INTEGER_SHIFT or abs(dc) > MAX_INTEGER_SHIFT:
        raise ValueError(f"integer shift ({dr}, {dc}) exceeds {MAX_INTEGER_SHIFT} px")
    m = MAX_INTEGER_SHIFT
    xp = np.pad(x, m, mode="edge")
    h, w = x.shape
    return xp[m - dr : m - dr + h, m - dc : m - dc + w].copy()


def _mirror_index(idx: np.ndarray, n: int) -> np.ndarray:
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx > n - 1, period - idx, idx)


def spline_coefficients(x: np.ndarray, axis: int = 0) -> np.ndarray:
    """Cubic B-spline interpolation coefficients along axis (mirror boundary)."""
    c = np.moveaxis(np.array(x, dtype=np.float64), axis, 0)
    n = c.shape[0]
    if n == 1:
        return np.moveaxis(c, 0, axis)
    z = SPLINE_POLE
    c = c * (1.0 - z) * (1.0 - 1.0 / z)

    horizon = int(math.ceil(math.log(SPLINE_TOL) / math.log(abs(z))))
    if horizon < n:
        powers = z ** np.arange(horizon)
        first = np.tensordot(powers, c[:horizon], axes=(0, 0))
    else:
        k = np.arange(1, n - 1)
        weights = z**k + z ** (2 * n - 2 - k)
        first = c[0] + z ** (n - 1) * c[n - 1] + np.tensordot(weights, c[1 : n - 1], axes=(0, 0))
        first = first / (1.0 - z ** (2 * n - 2))

    c[0] = first
    for k in range(1, n):
        c[k] = c[k] + z * c[k - 1]
    c[n - 1] = (z / (z * z - 1.0)) * (c[n - 1] + z * c[n - 2])
    for k in range(n - 2, -1, -1):
        c[k] = z * (c[k + 1] - c[k])
    return np.moveaxis(c, 0, axis)


def _spline_shift_axis(x: np.ndarray, d: float, axis: int) -> np.ndarray:
    coeffs = np.moveaxis(spline_coefficients(x, axis), axis, 0)
    n = coeffs.shape[0]
    src = np.arange(n, dtype=np.float64) - d
    valid = (src >= -1e-9) & (src <= n - 1 + 1e-9)
    src = np.clip(src, 0.0, n - 1)
    k0 = np.floor(src).astype(np.int64)
    t = src - k0
    u = 1.0 - t
    weights = (
        u**3 / 6.0,
        2.0 / 3.0 - t**2 + t**3 / 2.0,
        2.0 / 3.0 - u**2 + u**3 / 2.0,
        t**3 / 6.0,
    )
    out = np.zeros_like(coeffs)
    for offset, w in zip((-1, 0, 1, 2), weights):
        idx = _mirror_index(k0 + offset, n)
        out += w[:, None] * coeffs[idx]
    out[~valid] = 0.0
    return np.moveaxis(out, 0, axis)


def spline_shift(band: np.ndarray, dr: float, dc: float) -> np.ndarray:
    """Translate by (dr, dc) px with cubic B-spline interpolation; zeros where the source is missing."""
    x = _as_band(band)
    if abs(dr) > MAX_SPLINE_SHIFT or abs(dc) > MAX_SPLINE_SHIFT:
        raise ValueError(f"spline shift ({dr}, {dc}) exceeds {MAX_SPLINE_SHIFT} px")
    return _spline_shift_axis(_spline_shift_axis(x, float(dr), axis=0), float(dc), axis=1)


def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def _fft_pow2(a: np.ndarray) -> np.ndarray:
    """Iterative radix-2 decimation-in-time along the last axis."""
    n = a.shape[-1]
    lead = a.shape[:-1]
    a = a[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        a = np.concatenate((even + odd, even - odd), axis=-1).reshape(*lead, n)
        size *= 2
    return a


def _ifft_pow2(a: np.ndarray) -> np.ndarray:
    return np.conj(_fft_pow2(np.conj(a))) / a.shape[-1]


def _fft_bluestein(x: np.ndarray) -> np.ndarray:
    """Chirp-z transform for arbitrary lengths, convolution done with the radix-2 path."""
    n = x.shape[-1]
    m = 1 << (2 * n - 1).bit_length()
    k = np.arange(n)
    chirp = np.exp(-1j * np.pi * ((k * k) % (2 * n)) / n)

    a = np.zeros(x.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = x * chirp
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(chirp)
    b[m - n + 1 :] = np.conj(chirp[1:])[::-1]

    conv = _ifft_pow2(_fft_pow2(a) * _fft_pow2(b))
    return conv[..., :n] * chirp


def fft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """1-D forward DFT along axis (no normalization)."""
    a = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    n = a.shape[-1]
    if n == 0:
        raise ValueError("zero-sized input")
    out = _fft_pow2(a) if n & (n - 1) == 0 else _fft_bluestein(a)
    return np.moveaxis(out, -1, axis)


def ifft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """1-D inverse DFT along axis, scaled by 1/N."""
    a = np.asarray(x, dtype=np.complex128)
    n = a.shape[axis]
    if n == 0:
        raise ValueError("zero-sized input")
    return np.conj(fft(np.conj(a), axis=axis)) / n


def fft2(band: np.ndarray) -> Spectrum:
    x = np.asarray(band)
    if x.ndim != 2 or x.size == 0:
        raise ValueError(f"fft2 needs a non-empty 2-D array, got shape {x.shape}")
    return fft(fft(x, axis=1), axis=0)


def ifft2(spectrum: Spectrum) -> np.ndarray:
    """Inverse of fft2 (complex result; callers take .real for real signals)."""
    x = np.asarray(spectrum)
    if x.ndim != 2 or x.size == 0:
        raise ValueError(f"ifft2 needs a non-empty 2-D array, got shape {x.shape}")
    return ifft(ifft(x, axis=1), axis=0)


def add_noise(band: np.ndarray, level: float, rng: Rng) -> np.ndarray:
    """Additive i.i.d. Gaussian noise, std = level * 4095."""
    if level < 0:
        raise ValueError(f"noise level must be >= 0, got {level}")
    x = _as_band(band)
    if level == 0:
        return x.copy()
    return x + rng.normal(0.0, level * PEAK, size=x.shape)


def alias_energy_ratio(band: np.ndarray) -> float:
    """Share of non-DC spectral energy outside the half-Nyquist square (|f| > 0.25 cycles/px)."""
    x = _as_band(band)
    power = np.abs(fft2(x)) ** 2
    dc = power[0, 0]
    power[0, 0] = 0.0
    total = power.sum()
    # constant input: only rounding residue outside DC
    if total <= 1e-20 * max(dc, 1.0):
        return 0.0
    fy = np.abs(np.fft.fftfreq(x.shape[0]))[:, None]
    fx = np.abs(np.fft.fftfreq(x.shape[1]))[None, :]
    mask = np.maximum(fy, fx) > ALIAS_CUTOFF
    return float(power[mask].sum() / total)


def _keys(x: np.ndarray) -> np.ndarray:
    a = KEYS_A
    x = np.abs(x)
    near = ((a + 2) * x - (a + 3)) * x * x + 1
    far = ((a * x - 5 * a) * x + 8 * a) * x - 4 * a
    return np.where(x <= 1, near, np.where(x < 2, far, 0.0))


def cubic_matrix(n_in: int, n_out: int) -> np.ndarray:
    """(n_out, n_in) Keys cubic-convolution weights, half-pixel centers, edge replication."""
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    k0 = np.floor(src).astype(np.int64)
    mat = np.zeros((n_out, n_in))
    rows = np.arange(n_out)
    for offset in (-1, 0, 1, 2):
        idx = k0 + offset
        w = _keys(src - idx)
        np.add.at(mat, (rows, np.clip(idx, 0, n_in - 1)), w)
    return mat


def resample_bicubic(band: np.ndarray, out_shape: tuple[int, int]) -> np.ndarray:
    """Bicubic resampling of the trailing two axes to out_shape."""
    x = np.asarray(band, dtype=np.float64)
    rows = cubic_matrix(x.shape[-2], out_shape[0])
    cols = cubic_matrix(x.shape[-1], out_shape[1])
    return rows @ x @ cols.T


def bicubic_upsample2(x: np.ndarray) -> np.ndarray:
    """x2 bicubic upsample of the trailing two axes."""
    x = np.asarray(x)
    return resample_bicubic(x, (2 * x.shape[-2], 2 * x.shape[-1]))
