"""
Seeded desk-scale stand-ins for the fusion datasets.

Every generator is a pure function of its arguments: the same seed gives the
same bytes.
"""

from typing import Tuple

import numpy as np
from scipy import ndimage

from cscfuse.imaging.planes import ColorSpace, ImagePlane, ImageStack

# Relative spectral response of the R, G, B guide channels: Gaussian curves
# over the normalized band axis [0, 1], each row summing to 1.
GUIDE_CENTERS = (0.8, 0.5, 0.2)
GUIDE_WIDTH = 0.15


def guide_projection(bands: int) -> np.ndarray:
    """(3, bands) matrix mapping a spectral cube to its RGB guide."""
    axis = np.linspace(0.0, 1.0, bands) if bands > 1 else np.array([0.5])
    rows = np.exp(-((axis[None, :] - np.array(GUIDE_CENTERS)[:, None]) ** 2) / (2.0 * GUIDE_WIDTH ** 2))
    return rows / rows.sum(axis=1, keepdims=True)


def _smooth_field(rng: np.random.Generator, size: int, sigma: float) -> np.ndarray:
    """Zero-mean, unit-std Gaussian-filtered noise."""
    field = ndimage.gaussian_filter(rng.standard_normal((size, size)), sigma, mode="wrap")
    return (field - field.mean()) / (field.std() + 1e-12)


def _shape_masks(rng: np.random.Generator, size: int, count: int) -> np.ndarray:
    """(count, size, size) binary masks of random rectangles and ellipses."""
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    masks = np.zeros((count, size, size))
    for i in range(count):
        cy, cx = rng.uniform(0.15, 0.85, size=2) * size
        ry, rx = rng.uniform(0.06, 0.22, size=2) * size
        if rng.random() < 0.5:
            masks[i] = (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        else:
            masks[i] = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    return masks


def synth_ivf_pair(seed: int, size: int = 64, shapes: int = 6) -> Tuple[ImagePlane, ImagePlane]:
    """
    Co-registered (infrared, visible) gray pair sharing one scene geometry.

    The visible image carries textured objects under smooth illumination; the
    infrared image shows the same objects with their own thermal contrast plus
    a few hot spots and little texture.
    """
    rng = np.random.default_rng(seed)
    masks = _shape_masks(rng, size, shapes)
    illumination = 0.5 + 0.15 * _smooth_field(rng, size, size / 4)
    texture = 0.06 * _smooth_field(rng, size, 1.0)

    visible = illumination.copy()
    for mask, level in zip(masks, rng.uniform(0.1, 0.9, size=shapes)):
        visible = np.where(mask > 0, level + texture, visible)

    infrared = np.full((size, size), 0.25) + 0.05 * _smooth_field(rng, size, size / 3)
    for mask, level in zip(masks, rng.uniform(0.2, 0.8, size=shapes)):
        infrared = np.where(mask > 0, level, infrared)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    for _ in range(3):
        cy, cx = rng.uniform(0.1, 0.9, size=2) * size
        radius = rng.uniform(0.03, 0.08) * size
        infrared = infrared + 0.5 * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2.0 * radius ** 2))
    infrared = ndimage.gaussian_filter(infrared, 0.7, mode="nearest")

    return ImagePlane.clipped(infrared), ImagePlane.clipped(visible)


def synth_exposure_stack(seed: int, k: int = 3, size: int = 64, color: bool = True,
                         ev_range: float = 4.0, gamma: float = 2.2) -> ImageStack:
    """
    K exposures of one HDR radiance map, darkest first.

    Exposure k scales the radiance by 2^ev_k with ev evenly spaced over
    [-ev_range/2, ev_range/2], then applies the 1/gamma tone curve and clips to
    [0, 1].
    """
    if k < 1:
        raise ValueError(f"An exposure stack needs k >= 1, got {k}")
    rng = np.random.default_rng(seed)
    log_radiance = 1.2 * _smooth_field(rng, size, size / 6)
    for mask, boost in zip(_shape_masks(rng, size, 5), rng.uniform(-1.5, 2.0, size=5)):
        log_radiance = log_radiance + boost * mask
    log_radiance = log_radiance + 0.25 * _smooth_field(rng, size, 1.0)
    radiance = np.exp(log_radiance) * 0.18

    if color:
        tint = rng.uniform(0.7, 1.3, size=(3, 1, 1))
        radiance = radiance[None] * tint
        colorspace = ColorSpace.RGB
    else:
        radiance = radiance[None]
        colorspace = ColorSpace.GRAY

    evs = np.linspace(-ev_range / 2, ev_range / 2, k) if k > 1 else np.zeros(1)
    planes = [ImagePlane.clipped((radiance * 2.0 ** ev) ** (1.0 / gamma), colorspace) for ev in evs]
    return ImageStack(planes, sources=[f"synthetic:{seed}:ev{ev:+.2f}" for ev in evs])


def synth_spectral_scene(seed: int, bands: int = 8, scale: int = 4, size: int = 64,
                         endmembers: int = 4) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Smooth mixture of random endmember spectra.

    Returns:
        (lr, guide, hr): lr (bands, size/scale, size/scale) from the Wald
        protocol, guide (3, size, size) = guide_projection(bands) applied to
        hr, hr (bands, size, size)
    """
    from cscfuse.pipelines.mmf import wald_protocol

    rng = np.random.default_rng(seed)
    logits = np.stack([2.5 * _smooth_field(rng, size, size / 8) for _ in range(endmembers)])
    for mask, member in zip(_shape_masks(rng, size, endmembers), range(endmembers)):
        logits[member] += 3.0 * mask
    abundance = np.exp(logits - logits.max(axis=0, keepdims=True))
    abundance /= abundance.sum(axis=0, keepdims=True)

    axis = np.linspace(0.0, 1.0, bands)
    spectra = np.empty((endmembers, bands))
    for e in range(endmembers):
        coefficients = rng.standard_normal(4)
        curve = sum(c * np.cos(np.pi * j * axis) for j, c in enumerate(coefficients))
        curve = (curve - curve.min()) / (curve.max() - curve.min() + 1e-12)
        spectra[e] = 0.05 + 0.9 * curve

    hr = np.einsum("eb,ehw->bhw", spectra, abundance)
    guide = np.einsum("gb,bhw->ghw", guide_projection(bands), hr)
    return wald_protocol(hr, guide, scale)
