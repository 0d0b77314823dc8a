"""
Matrices for separable linear filters.

A separable filter acting on an (h, w) plane is written as Mh @ x @ Mw.T, so
every filter here is a function (n_in -> matrix) for one axis. The same
matrices drive the numpy filters and the differentiable `separable` operator.
"""

import math
from functools import lru_cache

import numpy as np

INTERPOLATION_MODES = ("bilinear", "bicubic", "nearest")


def _clamp(index: np.ndarray, n: int) -> np.ndarray:
    return np.clip(index, 0, n - 1)


def _frozen(m: np.ndarray) -> np.ndarray:
    # cached matrices are shared between callers
    m.flags.writeable = False
    return m


def _from_taps(n: int, taps: np.ndarray) -> np.ndarray:
    """Same-size correlation with an odd tap vector and replicate border."""
    radius = len(taps) // 2
    m = np.zeros((n, n))
    rows = np.arange(n)
    for k, tap in enumerate(taps):
        np.add.at(m, (rows, _clamp(rows + k - radius, n)), tap)
    return _frozen(m)


@lru_cache(maxsize=128)
def box_matrix(n: int, radius: int) -> np.ndarray:
    """Mean over the (2*radius + 1) window, replicate border."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    size = 2 * radius + 1
    return _from_taps(n, np.full(size, 1.0 / size))


@lru_cache(maxsize=32)
def sobel_matrices(n: int):
    """(smooth, derivative) pair: [1, 2, 1] and [-1, 0, 1] with replicate border."""
    return _from_taps(n, np.array([1.0, 2.0, 1.0])), _from_taps(n, np.array([-1.0, 0.0, 1.0]))


def gaussian_taps(size: int, sigma: float) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x ** 2) / (2.0 * sigma ** 2))
    return g / g.sum()


def _valid(n: int, taps: np.ndarray) -> np.ndarray:
    size = len(taps)
    if size > n:
        raise ValueError(f"Window of {size} does not fit an axis of length {n}")
    m = np.zeros((n - size + 1, n))
    for i in range(n - size + 1):
        m[i, i:i + size] = taps
    return _frozen(m)


@lru_cache(maxsize=64)
def gaussian_valid_matrix(n: int, size: int, sigma: float) -> np.ndarray:
    """Gaussian-weighted window means at every valid position."""
    return _valid(n, gaussian_taps(size, sigma))


@lru_cache(maxsize=64)
def uniform_valid_matrix(n: int, size: int) -> np.ndarray:
    return _valid(n, np.full(size, 1.0 / size))


@lru_cache(maxsize=64)
def gaussian_matrix(n: int, sigma: float, truncate: float = 4.0) -> np.ndarray:
    """Same-size Gaussian blur with radius int(truncate * sigma + 0.5), replicate border."""
    radius = int(truncate * sigma + 0.5)
    return _from_taps(n, gaussian_taps(2 * radius + 1, sigma))


def _cubic(t: np.ndarray, a: float = -0.5) -> np.ndarray:
    t = np.abs(t)
    near = ((a + 2) * t - (a + 3)) * t * t + 1
    far = ((a * t - 5 * a) * t + 8 * a) * t - 4 * a
    return np.where(t <= 1, near, np.where(t < 2, far, 0.0))


@lru_cache(maxsize=64)
def interp_matrix(n_in: int, n_out: int, mode: str = "bilinear") -> np.ndarray:
    """
    Interpolate an axis of length n_in onto n_out samples.

    Pixel centers are aligned (half-pixel convention); taps falling outside the
    axis are clamped to the border. Every row sums to one.
    """
    if mode not in INTERPOLATION_MODES:
        raise ValueError(f"Unknown interpolation mode {mode!r}; expected one of {INTERPOLATION_MODES}")
    m = np.zeros((n_out, n_in))
    ratio = n_in / n_out
    for j in range(n_out):
        center = (j + 0.5) * ratio - 0.5
        if mode == "nearest":
            m[j, min(int(math.floor((j + 0.5) * ratio)), n_in - 1)] = 1.0
            continue
        base = int(math.floor(center))
        if mode == "bilinear":
            offsets = np.array([0, 1])
            weights = 1.0 - np.abs(center - (base + offsets))
        else:
            offsets = np.array([-1, 0, 1, 2])
            weights = _cubic(center - (base + offsets))
        np.add.at(m[j], _clamp(base + offsets, n_in), weights)
    return _frozen(m)


@lru_cache(maxsize=64)
def box_down_matrix(n_in: int, factor: int) -> np.ndarray:
    """Average consecutive blocks of `factor` samples (the last block may be shorter)."""
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    n_out = -(-n_in // factor)
    m = np.zeros((n_out, n_in))
    for j in range(n_out):
        lo, hi = j * factor, min((j + 1) * factor, n_in)
        m[j, lo:hi] = 1.0 / (hi - lo)
    return _frozen(m)


def apply(plane: np.ndarray, mh: np.ndarray, mw: np.ndarray) -> np.ndarray:
    """Numpy counterpart of the `separable` tensor operator on the trailing two axes."""
    return np.matmul(np.matmul(mh, plane), mw.T)
