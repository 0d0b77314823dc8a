"""
Fusion quality metrics.

Planes are (h, w) float arrays in [0, 1]; metrics that count gray levels
quantize to 8 bits with floor(v * 255 + 0.5).
"""

import logging
import math
from collections import OrderedDict
from typing import Dict, Optional, Sequence, Union

import numpy as np
from scipy import ndimage

from cscfuse.errors import DataError, ShapeError
from cscfuse.imaging.color import luma
from cscfuse.imaging.planes import ImagePlane
from cscfuse.training.losses import MefssimConfig, mefssim_value, ssim_value

logger = logging.getLogger(__name__)

PlaneLike = Union[np.ndarray, ImagePlane]

VIF_SIGMA = 2.0
VIF_NOISE_VAR = 2.0
VIF_EPS = 1e-10


def _plane(img: PlaneLike) -> np.ndarray:
    if isinstance(img, ImagePlane):
        return luma(img)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ShapeError(f"Metric needs a single-channel plane, got shape {arr.shape}")
    return arr


def _same(*planes: np.ndarray) -> None:
    shapes = {p.shape for p in planes}
    if len(shapes) != 1:
        raise ShapeError(f"Metric inputs differ in shape: {sorted(shapes)}")


def to_levels(plane: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(plane, 0.0, 1.0) * 255.0 + 0.5).astype(np.int64)


def _entropy_of(counts: np.ndarray) -> float:
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log2(p)).sum())


def entropy(img: PlaneLike) -> float:
    """EN: Shannon entropy (bits) of the 256-bin histogram."""
    levels = to_levels(_plane(img))
    return _entropy_of(np.bincount(levels.ravel(), minlength=256).astype(np.float64))


def _mutual_information(x: np.ndarray, y: np.ndarray) -> float:
    joint = np.zeros((256, 256))
    np.add.at(joint, (to_levels(x).ravel(), to_levels(y).ravel()), 1.0)
    return max(_entropy_of(joint.sum(axis=1)) + _entropy_of(joint.sum(axis=0)) - _entropy_of(joint.ravel()), 0.0)


def mutual_information(a: PlaneLike, b: PlaneLike, fused: PlaneLike) -> float:
    """MI: MI(a, fused) + MI(b, fused) from 256x256 joint histograms."""
    a, b, fused = _plane(a), _plane(b), _plane(fused)
    _same(a, b, fused)
    return _mutual_information(a, fused) + _mutual_information(b, fused)


def std_dev(img: PlaneLike) -> float:
    """SD: population standard deviation on the 0-255 scale (exactly 0 on flat planes)."""
    plane = _plane(img)
    if np.ptp(plane) == 0:
        return 0.0
    return float(np.std(plane) * 255.0)


def spatial_frequency(img: PlaneLike) -> float:
    """SF: sqrt(RF^2 + CF^2) from forward differences, on the 0-255 scale."""
    plane = _plane(img) * 255.0
    rf2 = np.mean(np.diff(plane, axis=1) ** 2) if plane.shape[1] > 1 else 0.0
    cf2 = np.mean(np.diff(plane, axis=0) ** 2) if plane.shape[0] > 1 else 0.0
    return float(math.sqrt(rf2 + cf2))


def avg_gradient(img: PlaneLike) -> float:
    """AG: mean of sqrt((dx^2 + dy^2) / 2) over the (h-1) x (w-1) interior, on the 0-255 scale."""
    plane = _plane(img) * 255.0
    if min(plane.shape) < 2:
        return 0.0
    dx = plane[:-1, 1:] - plane[:-1, :-1]
    dy = plane[1:, :-1] - plane[:-1, :-1]
    return float(np.mean(np.sqrt((dx ** 2 + dy ** 2) / 2.0)))


def _vif_single(reference: np.ndarray, distorted: np.ndarray) -> float:
    """Pixel-domain VIF at one scale with a Gaussian window (sigma 2) on the 0-255 scale."""
    ref, dist = reference * 255.0, distorted * 255.0

    def local(x):
        return ndimage.gaussian_filter(x, VIF_SIGMA, mode="nearest")

    mu1, mu2 = local(ref), local(dist)
    sigma1_sq = np.maximum(local(ref * ref) - mu1 * mu1, 0.0)
    sigma2_sq = np.maximum(local(dist * dist) - mu2 * mu2, 0.0)
    sigma12 = local(ref * dist) - mu1 * mu2

    g = sigma12 / (sigma1_sq + VIF_EPS)
    sv_sq = sigma2_sq - g * sigma12

    flat_ref = sigma1_sq < VIF_EPS
    g[flat_ref] = 0.0
    sv_sq[flat_ref] = sigma2_sq[flat_ref]
    sigma1_sq = np.where(flat_ref, 0.0, sigma1_sq)

    flat_dist = sigma2_sq < VIF_EPS
    g[flat_dist] = 0.0
    sv_sq[flat_dist] = 0.0

    negative = g < 0
    sv_sq[negative] = sigma2_sq[negative]
    g[negative] = 0.0
    sv_sq = np.maximum(sv_sq, VIF_EPS)

    num = np.sum(np.log2(1.0 + g * g * sigma1_sq / (sv_sq + VIF_NOISE_VAR)))
    den = np.sum(np.log2(1.0 + sigma1_sq / VIF_NOISE_VAR))
    if den <= 0:
        return 1.0
    return float(num / den)


def vif_fusion(a: PlaneLike, b: PlaneLike, fused: PlaneLike) -> float:
    """VIF: single-scale VIF of the fused image against each source, summed."""
    a, b, fused = _plane(a), _plane(b), _plane(fused)
    _same(a, b, fused)
    return _vif_single(a, fused) + _vif_single(b, fused)


def _correlation(x: np.ndarray, y: np.ndarray) -> float:
    xc, yc = x - x.mean(), y - y.mean()
    denom = math.sqrt(float(np.sum(xc * xc)) * float(np.sum(yc * yc)))
    if denom == 0.0:
        return 0.0
    return float(np.sum(xc * yc) / denom)


def scd(a: PlaneLike, b: PlaneLike, fused: PlaneLike) -> float:
    """SCD: r(fused - b, a) + r(fused - a, b)."""
    a, b, fused = _plane(a), _plane(b), _plane(fused)
    _same(a, b, fused)
    return _correlation(fused - b, a) + _correlation(fused - a, b)


def _bands(img) -> np.ndarray:
    arr = img.pixels if isinstance(img, ImagePlane) else np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"Expected a (bands, h, w) cube, got shape {arr.shape}")
    return arr


def psnr(reference, test) -> float:
    """Peak-1 PSNR per band, averaged; inf when the images are identical."""
    ref, out = _bands(reference), _bands(test)
    _same(ref, out)
    values = []
    for r, t in zip(ref, out):
        err = float(np.mean((r - t) ** 2))
        values.append(math.inf if err == 0.0 else 10.0 * math.log10(1.0 / err))
    return float(np.mean(values))


def ssim_metric(reference, test) -> float:
    """SSIM per band, averaged."""
    ref, out = _bands(reference), _bands(test)
    _same(ref, out)
    return float(np.mean([ssim_value(r, t) for r, t in zip(ref, out)]))


def error_map(reference, test, gain: float = 10.0) -> np.ndarray:
    """|reference - test| amplified by `gain` and clipped to [0, 1], per band."""
    ref, out = _bands(reference), _bands(test)
    _same(ref, out)
    return np.clip(np.abs(ref - out) * gain, 0.0, 1.0)


def ivf_metrics(a: PlaneLike, b: PlaneLike, fused: PlaneLike) -> Dict[str, float]:
    return OrderedDict([
        ("EN", entropy(fused)),
        ("MI", mutual_information(a, b, fused)),
        ("SD", std_dev(fused)),
        ("SF", spatial_frequency(fused)),
        ("VIF", vif_fusion(a, b, fused)),
        ("AG", avg_gradient(fused)),
        ("SCD", scd(a, b, fused)),
    ])


def mef_metrics(sources: Sequence[PlaneLike], fused: PlaneLike) -> Dict[str, float]:
    """No-reference statistics of the fused Y plus MEF-SSIM against the source Y channels."""
    if len(sources) < 1:
        raise DataError("MEF evaluation needs at least one source image")
    ys = np.stack([_plane(s) for s in sources])
    fused_y = _plane(fused)
    _same(ys[0], fused_y)
    window = min(MefssimConfig().window, *fused_y.shape)
    return OrderedDict([
        ("EN", entropy(fused_y)),
        ("SD", std_dev(fused_y)),
        ("SF", spatial_frequency(fused_y)),
        ("AG", avg_gradient(fused_y)),
        ("MEFSSIM", mefssim_value(ys, fused_y, MefssimConfig(window=max(window, 2)))),
    ])


def mmf_metrics(reference, test) -> Dict[str, float]:
    return OrderedDict([("PSNR", psnr(reference, test)), ("SSIM", ssim_metric(reference, test))])


def evaluate_all(task: str, inputs: Sequence, fused_or_ref, sources: Optional[Sequence[str]] = None,
                 fused_path: Optional[str] = None):
    """
    Run the metric set of a task and wrap it in a MetricReport.

    Args:
        task: 'ivf' (inputs = [infrared, visible], fused image),
              'mef' (inputs = exposures, fused image) or
              'mmf' (inputs = [reference cube], test cube)
        inputs: Source images
        fused_or_ref: Fused image (ivf, mef) or the cube under test (mmf)
        sources: Source paths recorded as provenance
        fused_path: Path of the fused/test image recorded as provenance
    """
    from cscfuse.analysis.reporter import MetricReport

    if task == "ivf":
        if len(inputs) != 2:
            raise DataError(f"IVF evaluation needs exactly two sources, got {len(inputs)}")
        values = ivf_metrics(inputs[0], inputs[1], fused_or_ref)
    elif task == "mef":
        values = mef_metrics(inputs, fused_or_ref)
    elif task == "mmf":
        if len(inputs) != 1:
            raise DataError(f"MMF evaluation needs exactly one reference, got {len(inputs)}")
        values = mmf_metrics(inputs[0], fused_or_ref)
    else:
        raise ValueError(f"Unknown task {task!r}")
    logger.debug(f"{task} metrics: {dict(values)}")
    return MetricReport(task=task, values=values, sources=list(sources or []), fused=fused_path or "")
