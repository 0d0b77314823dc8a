"""Tensor versions of the separable filters, recorded on the gradient tape."""

from typing import Tuple

from cscfuse.imaging import kernels
from cscfuse.tensor import ops
from cscfuse.tensor.core import Tensor


def box_mean(x: Tensor, radius: int) -> Tensor:
    h, w = x.shape[-2:]
    return ops.separable(x, kernels.box_matrix(h, radius), kernels.box_matrix(w, radius))


def sobel(x: Tensor) -> Tuple[Tensor, Tensor]:
    h, w = x.shape[-2:]
    smooth_h, deriv_h = kernels.sobel_matrices(h)
    smooth_w, deriv_w = kernels.sobel_matrices(w)
    return ops.separable(x, smooth_h, deriv_w), ops.separable(x, deriv_h, smooth_w)


def resize(x: Tensor, size: Tuple[int, int], mode: str = "bilinear") -> Tensor:
    h, w = x.shape[-2:]
    return ops.separable(x, kernels.interp_matrix(h, size[0], mode), kernels.interp_matrix(w, size[1], mode))


def downsample(x: Tensor, factor: int) -> Tensor:
    """Bilinear reduction to ceil(h / factor) x ceil(w / factor)."""
    h, w = x.shape[-2:]
    return resize(x, (-(-h // factor), -(-w // factor)), "bilinear")


def upsample(x: Tensor, factor: int, mode: str = "bicubic") -> Tensor:
    if factor == 1:
        return x
    h, w = x.shape[-2:]
    return resize(x, (h * factor, w * factor), mode)


def fast_guided_filter(p: Tensor, guide: Tensor, radius: int, eps: float, subsample: int) -> Tensor:
    """Channel-wise fast guided filter; p and guide are (n, c, h, w) of equal shape."""
    h, w = p.shape[-2:]
    if subsample > 1:
        p_low, guide_low = downsample(p, subsample), downsample(guide, subsample)
        r = max(1, radius // subsample)
    else:
        p_low, guide_low, r = p, guide, radius
    mean_i = box_mean(guide_low, r)
    mean_p = box_mean(p_low, r)
    cov_ip = box_mean(guide_low * p_low, r) - mean_i * mean_p
    var_i = box_mean(guide_low * guide_low, r) - mean_i * mean_i
    a = cov_ip / (var_i + eps)
    b = mean_p - a * mean_i
    mean_a, mean_b = box_mean(a, r), box_mean(b, r)
    if subsample > 1:
        mean_a, mean_b = resize(mean_a, (h, w)), resize(mean_b, (h, w))
    return mean_a * guide + mean_b
