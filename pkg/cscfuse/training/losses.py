"""
Training objectives.

Image tensors are (n, c, h, w). The composite losses normalize by the number
of pixels per image (1/hw) and average over the batch.
"""

from dataclasses import dataclass
from typing import Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from cscfuse.errors import ShapeError
from cscfuse.imaging import differentiable, kernels
from cscfuse.tensor import ops
from cscfuse.tensor.core import Tensor, as_tensor, no_grad, precision

ImageLike = Union[Tensor, np.ndarray]

# MEF-SSIM windows whose best source contrast is below this are treated as flat
ZERO_CONTRAST = 1e-12


@dataclass(frozen=True)
class SsimConfig:
    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    dynamic_range: float = 1.0

    @property
    def c1(self) -> float:
        return (self.k1 * self.dynamic_range) ** 2

    @property
    def c2(self) -> float:
        return (self.k2 * self.dynamic_range) ** 2

    def window_for(self, h: int, w: int) -> int:
        """The configured window, shrunk to the largest odd size that fits small images."""
        size = min(self.window, h, w)
        return size if size % 2 == 1 else size - 1


@dataclass(frozen=True)
class MefssimConfig:
    window: int = 8
    sigma_l: float = 0.2
    k: float = 0.03

    def __post_init__(self):
        if self.window < 2:
            raise ValueError(f"MEF-SSIM window side must be >= 2, got {self.window}")

    @property
    def c(self) -> float:
        """Stabilizing constant shared by the luminance and contrast-structure terms."""
        return self.k ** 2


def _image4d(x: ImageLike) -> Tensor:
    t = x if isinstance(x, Tensor) else Tensor(np.asarray(x))
    if t.ndim == 2:
        return ops.reshape(t, (1, 1) + t.shape)
    if t.ndim == 3:
        return ops.reshape(t, (1,) + t.shape)
    if t.ndim != 4:
        raise ShapeError(f"Expected an image of 2 to 4 dimensions, got shape {t.shape}")
    return t


def _pair(x: ImageLike, y: ImageLike):
    x, y = _image4d(x), _image4d(y)
    if x.shape != y.shape:
        raise ShapeError(f"Loss inputs differ in shape: {x.shape} vs {y.shape}")
    return x, y


def mse(x: ImageLike, y: ImageLike) -> Tensor:
    """Sum of squared differences."""
    x, y = _pair(x, y)
    diff = x - y
    return ops.sum(diff * diff)


def ssim_map(x: ImageLike, y: ImageLike, cfg: SsimConfig = SsimConfig()) -> Tensor:
    """SSIM index at every valid window position, per channel."""
    x, y = _pair(x, y)
    h, w = x.shape[-2:]
    size = cfg.window_for(h, w)
    gh = kernels.gaussian_valid_matrix(h, size, cfg.sigma)
    gw = kernels.gaussian_valid_matrix(w, size, cfg.sigma)

    def window_mean(t: Tensor) -> Tensor:
        return ops.separable(t, gh, gw)

    mu_x, mu_y = window_mean(x), window_mean(y)
    var_x = window_mean(x * x) - mu_x * mu_x
    var_y = window_mean(y * y) - mu_y * mu_y
    cov = window_mean(x * y) - mu_x * mu_y
    numerator = (2.0 * mu_x * mu_y + cfg.c1) * (2.0 * cov + cfg.c2)
    denominator = (mu_x * mu_x + mu_y * mu_y + cfg.c1) * (var_x + var_y + cfg.c2)
    return numerator / denominator


def ssim(x: ImageLike, y: ImageLike, cfg: SsimConfig = SsimConfig()) -> Tensor:
    """Mean SSIM over windows, channels and the batch."""
    return ops.mean(ssim_map(x, y, cfg))


def ssim_value(x: np.ndarray, y: np.ndarray, cfg: SsimConfig = SsimConfig()) -> float:
    """SSIM of two numpy planes, evaluated in float64 without recording."""
    with precision(np.float64), no_grad():
        return float(ssim(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64), cfg).data)


def ivf_loss(x: ImageLike, x_hat: ImageLike, lambda_ivf: float = 5.0, cfg: SsimConfig = SsimConfig()) -> Tensor:
    """(1/hw) * (mse + lambda * (1 - ssim) / 2), averaged over the batch."""
    x, x_hat = _pair(x, x_hat)
    n, _, h, w = x.shape
    hw = float(h * w)
    return mse(x, x_hat) / (n * hw) + (lambda_ivf / (2.0 * hw)) * (1.0 - ssim(x, x_hat, cfg))


def _source_stack(sources: ImageLike) -> np.ndarray:
    data = sources.data if isinstance(sources, Tensor) else np.asarray(sources)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 3:
        data = data[None]
    if data.ndim != 4:
        raise ShapeError(f"Sources must be (K, h, w) or (n, K, h, w), got shape {data.shape}")
    return data


def desired_patches(sources: np.ndarray, cfg: MefssimConfig = MefssimConfig()):
    """
    Per-window desired patch from the exposures.

    Args:
        sources: (n, K, h, w) Y channels

    Returns:
        (mean, detail, flat): desired mean intensity (n, oh, ow), the desired
        mean-removed patch c_hat * s_hat (n, oh, ow, win, win), and the mask of
        zero-contrast windows
    """
    win = cfg.window
    p = sliding_window_view(sources, (win, win), axis=(-2, -1))
    mu = p.mean(axis=(-2, -1))
    centered = p - mu[..., None, None]
    contrast = np.sqrt((centered ** 2).sum(axis=(-2, -1)))
    c_hat = contrast.max(axis=1)

    structure_sum = centered.sum(axis=1)
    norm = np.sqrt((structure_sum ** 2).sum(axis=(-2, -1)))
    safe = np.where(norm > 0, norm, 1.0)
    s_hat = np.where((norm > 0)[..., None, None], structure_sum / safe[..., None, None], 0.0)

    weight = np.exp(-((mu - 0.5) ** 2) / (2.0 * cfg.sigma_l ** 2))
    l_hat = (weight * mu).sum(axis=1) / weight.sum(axis=1)
    return l_hat, c_hat[..., None, None] * s_hat, c_hat <= ZERO_CONTRAST


def mefssim(sources: ImageLike, fused: ImageLike, cfg: MefssimConfig = MefssimConfig()) -> Tensor:
    """
    MEF-SSIM of a fused Y channel against K source Y channels.

    The desired patch is built from the sources only and is constant for
    differentiation. Each window scores l * cs with
    l = (2 mu_d mu_f + C) / (mu_d^2 + mu_f^2 + C) and
    cs = (2 cov + C) / (var_d + var_f + C), C = (0.03)^2; flat windows score l only.

    Args:
        sources: (K, h, w) or (n, K, h, w)
        fused: (h, w) or (n, 1, h, w)
    """
    src = _source_stack(sources)
    f = _image4d(fused)
    n, _, h, w = src.shape
    if f.shape != (n, 1, h, w):
        raise ShapeError(f"Fused image {f.shape} does not match sources {src.shape}")
    win = cfg.window
    if win > h or win > w:
        raise ShapeError(f"MEF-SSIM window {win} does not fit {h}x{w} images")

    l_hat, detail, flat = desired_patches(src, cfg)
    count = float(win * win)
    dtype = f.dtype

    fp = ops.reshape(ops.patches(f, win), (n,) + l_hat.shape[1:] + (win, win))
    mu_f = ops.mean(fp, axis=(-2, -1), keepdims=True)
    centered_f = fp - mu_f
    var_f = ops.sum(centered_f * centered_f, axis=(-2, -1)) / count
    cov = ops.sum(centered_f * detail.astype(dtype), axis=(-2, -1)) / count
    var_d = (detail ** 2).sum(axis=(-2, -1)) / count
    mu_f = ops.reshape(mu_f, l_hat.shape)

    luminance = (2.0 * mu_f * l_hat.astype(dtype) + cfg.c) / (mu_f * mu_f + (l_hat ** 2 + cfg.c).astype(dtype))
    cs = (2.0 * cov + cfg.c) / (var_f + (var_d + cfg.c).astype(dtype))
    keep = (~flat).astype(dtype)
    cs = cs * keep + (1.0 - keep)
    return ops.mean(luminance * cs)


def mefssim_value(sources: np.ndarray, fused: np.ndarray, cfg: MefssimConfig = MefssimConfig()) -> float:
    with precision(np.float64), no_grad():
        return float(mefssim(np.asarray(sources, dtype=np.float64), np.asarray(fused, dtype=np.float64), cfg).data)


def halo_loss(fused: ImageLike) -> Tensor:
    """Sum of |gx| + |gy| over Sobel responses (subgradient 0 at 0)."""
    f = _image4d(fused)
    if f.shape[1] != 1:
        raise ShapeError(f"halo_loss needs a single channel, got {f.shape[1]}")
    gx, gy = differentiable.sobel(f)
    return ops.sum(ops.absolute(gx)) + ops.sum(ops.absolute(gy))


def mef_loss(sources: ImageLike, fused: ImageLike, lambda_mef: float,
             cfg: MefssimConfig = MefssimConfig()) -> Tensor:
    """(1/hw) * (-mefssim + lambda * halo), halo averaged over the batch."""
    f = _image4d(fused)
    n, _, h, w = f.shape
    hw = float(h * w)
    score = mefssim(sources, f, cfg)
    if lambda_mef == 0:
        return -score / hw
    return (-score + (lambda_mef / n) * halo_loss(f)) / hw


def lambda_mef_schedule(iteration: int, lambda_max: float = 10.0) -> float:
    """min(0.25 * (i - 1), lambda_max) for iterations counted from 1."""
    if iteration < 1:
        raise ValueError(f"iteration counts from 1, got {iteration}")
    return min(0.25 * (iteration - 1), lambda_max)


def as_image_tensor(x: ImageLike) -> Tensor:
    return _image4d(as_tensor(x))
