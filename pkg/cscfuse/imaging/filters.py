"""
Classical filters on numpy planes.

All local filters use replicate borders. Functions accept (h, w) planes or
(..., h, w) stacks unless stated otherwise; ImagePlane inputs give ImagePlane
outputs where the result stays in [0, 1].
"""

import logging
import math
from typing import Tuple, Union

import numpy as np
from scipy import ndimage

from cscfuse.imaging import kernels
from cscfuse.imaging.planes import ImagePlane

logger = logging.getLogger(__name__)

Image = Union[np.ndarray, ImagePlane]

SOBEL_SMOOTH = np.array([1.0, 2.0, 1.0])
SOBEL_DERIVATIVE = np.array([-1.0, 0.0, 1.0])


def _pixels(img: Image) -> np.ndarray:
    return img.pixels if isinstance(img, ImagePlane) else np.asarray(img, dtype=np.float64)


def _spatial_size(arr: np.ndarray, size: int):
    return (1,) * (arr.ndim - 2) + (size, size)


def box_mean(img: Image, radius: int) -> np.ndarray:
    """Mean over (2 * radius + 1)^2 windows."""
    arr = _pixels(img)
    return ndimage.uniform_filter(arr, size=_spatial_size(arr, 2 * radius + 1), mode="nearest")


def base_detail_split(img: Image, radius: int = 15) -> Tuple[np.ndarray, np.ndarray]:
    """
    Two-scale decomposition: base = box mean, detail = img - base.

    Args:
        img: Plane or stack
        radius: Box radius (window 2 * radius + 1)

    Returns:
        (base, detail) arrays; detail is not range-clamped
    """
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    arr = _pixels(img)
    base = box_mean(arr, radius)
    return base, arr - base


def sobel_gradients(img: Image) -> Tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical 3x3 Sobel responses of a single-channel plane."""
    arr = _pixels(img)
    if arr.ndim == 3:
        if arr.shape[0] != 1:
            raise ValueError(f"sobel_gradients needs a single channel, got {arr.shape[0]}")
        arr = arr[0]
    gx = ndimage.correlate1d(ndimage.correlate1d(arr, SOBEL_SMOOTH, axis=0, mode="nearest"),
                             SOBEL_DERIVATIVE, axis=1, mode="nearest")
    gy = ndimage.correlate1d(ndimage.correlate1d(arr, SOBEL_DERIVATIVE, axis=0, mode="nearest"),
                             SOBEL_SMOOTH, axis=1, mode="nearest")
    return gx, gy


def _coefficients(p: np.ndarray, guide: np.ndarray, radius: int, eps: float):
    mean_i = box_mean(guide, radius)
    mean_p = box_mean(p, radius)
    cov_ip = box_mean(guide * p, radius) - mean_i * mean_p
    var_i = box_mean(guide * guide, radius) - mean_i * mean_i
    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    return box_mean(a, radius), box_mean(b, radius)


def guided_filter(p: Image, guide: Image, radius: int = 8, eps: float = 1e-2) -> np.ndarray:
    """
    Edge-preserving smoothing of p steered by guide: q = mean(a) * I + mean(b).

    Args:
        p: Map to filter
        guide: Guidance plane of the same shape
        radius: Box radius
        eps: Regularizer on the guidance variance

    Returns:
        Filtered array shaped like p
    """
    p_arr, guide_arr = _pixels(p), _pixels(guide)
    if p_arr.shape != guide_arr.shape:
        raise ValueError(f"guided_filter needs equal shapes, got {p_arr.shape} and {guide_arr.shape}")
    mean_a, mean_b = _coefficients(p_arr, guide_arr, radius, eps)
    return mean_a * guide_arr + mean_b


def fast_guided_filter(p: Image, guide: Image, radius: int = 8, eps: float = 1e-2,
                       subsample: int = 4) -> np.ndarray:
    """
    Guided filter with coefficients fitted at 1/subsample resolution.

    Inputs are bilinearly reduced to ceil(h / subsample) x ceil(w / subsample),
    the coefficients are fitted there with radius max(1, radius // subsample),
    upsampled bilinearly and applied to the full-resolution guide.
    subsample = 1 is the plain guided filter.
    """
    if subsample < 1:
        raise ValueError(f"subsample must be >= 1, got {subsample}")
    if subsample == 1:
        return guided_filter(p, guide, radius, eps)
    p_arr, guide_arr = _pixels(p), _pixels(guide)
    if p_arr.shape != guide_arr.shape:
        raise ValueError(f"fast_guided_filter needs equal shapes, got {p_arr.shape} and {guide_arr.shape}")
    h, w = p_arr.shape[-2:]
    down_h = kernels.interp_matrix(h, -(-h // subsample), "bilinear")
    down_w = kernels.interp_matrix(w, -(-w // subsample), "bilinear")
    p_low = kernels.apply(p_arr, down_h, down_w)
    guide_low = kernels.apply(guide_arr, down_h, down_w)
    mean_a, mean_b = _coefficients(p_low, guide_low, max(1, radius // subsample), eps)
    up_h = kernels.interp_matrix(down_h.shape[0], h, "bilinear")
    up_w = kernels.interp_matrix(down_w.shape[0], w, "bilinear")
    return kernels.apply(mean_a, up_h, up_w) * guide_arr + kernels.apply(mean_b, up_h, up_w)


def resample(img: Image, factor: int, mode: str = "bilinear", direction: str = "up") -> Image:
    """
    Separable integer-factor resampling.

    Upsampling interpolates with the given mode; downsampling averages
    factor x factor blocks (box prefilter plus decimation) whatever the mode.
    """
    if factor < 1 or int(factor) != factor:
        raise ValueError(f"factor must be a positive integer, got {factor}")
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    arr = _pixels(img)
    h, w = arr.shape[-2:]
    if factor == 1:
        out = arr.copy()
    elif direction == "up":
        out = kernels.apply(arr, kernels.interp_matrix(h, h * factor, mode), kernels.interp_matrix(w, w * factor, mode))
    else:
        out = kernels.apply(arr, kernels.box_down_matrix(h, factor), kernels.box_down_matrix(w, factor))
    if isinstance(img, ImagePlane):
        return ImagePlane.clipped(out, img.colorspace)
    return out


def quantize_levels(plane: np.ndarray) -> np.ndarray:
    """Map a plane onto integer levels 0..255 over its own [min, max] range."""
    lo, hi = float(plane.min()), float(plane.max())
    if hi <= lo:
        return np.zeros(plane.shape, dtype=np.int64)
    return np.floor((plane - lo) / (hi - lo) * 255.0 + 0.5).astype(np.int64)


def saliency_map(plane: Image) -> np.ndarray:
    """
    Histogram-contrast saliency S(k) = sum_i H(i) * |q(k) - i| of a single-channel plane.

    The output is left unnormalized.
    """
    arr = _pixels(plane)
    if arr.ndim == 3:
        if arr.shape[0] != 1:
            raise ValueError(f"saliency_map needs a single channel, got {arr.shape[0]}")
        arr = arr[0]
    levels = quantize_levels(arr)
    histogram = np.bincount(levels.ravel(), minlength=256).astype(np.float64)
    grid = np.arange(256)
    table = np.abs(grid[:, None] - grid[None, :]) @ histogram
    return table[levels]


def nearest_rank(values: np.ndarray, percent: float) -> float:
    """Nearest-rank percentile: the ceil(p/100 * N)-th smallest value."""
    flat = np.sort(values, axis=None)
    rank = min(max(int(math.ceil(percent * flat.size / 100.0)), 1), flat.size)
    return float(flat[rank - 1])


def percentile_stretch(img: Image, lo: float = 0.5, hi: float = 99.5) -> Image:
    """
    Map the lo-percentile value to 0 and the hi-percentile value to 1, clipping the rest.

    Percentiles are taken over all channels jointly; a degenerate range gives a
    constant 0.5 image.
    """
    arr = _pixels(img)
    v_lo, v_hi = nearest_rank(arr, lo), nearest_rank(arr, hi)
    if v_hi <= v_lo:
        logger.debug("Degenerate percentile range; returning mid-gray")
        out = np.full(arr.shape, 0.5)
    else:
        out = np.clip((arr - v_lo) / (v_hi - v_lo), 0.0, 1.0)
    if isinstance(img, ImagePlane):
        return ImagePlane(out, img.colorspace)
    return out
