"""BT.601 full-range RGB <-> YCbCr with chroma centered at 0.5."""

import numpy as np

from cscfuse.errors import DataError
from cscfuse.imaging.planes import ColorSpace, ImagePlane

RGB_TO_YCBCR = np.array([
    [0.299, 0.587, 0.114],
    [-0.299 / 1.772, -0.587 / 1.772, 0.886 / 1.772],
    [0.701 / 1.402, -0.587 / 1.402, -0.114 / 1.402],
])
YCBCR_TO_RGB = np.linalg.inv(RGB_TO_YCBCR)
CHROMA_OFFSET = np.array([0.0, 0.5, 0.5])


def rgb_to_ycbcr_array(rgb: np.ndarray) -> np.ndarray:
    """(3, h, w) -> (3, h, w); no clipping."""
    return np.einsum("ij,jhw->ihw", RGB_TO_YCBCR, rgb) + CHROMA_OFFSET[:, None, None]


def ycbcr_to_rgb_array(ycbcr: np.ndarray) -> np.ndarray:
    return np.einsum("ij,jhw->ihw", YCBCR_TO_RGB, ycbcr - CHROMA_OFFSET[:, None, None])


def rgb_to_ycbcr(img: ImagePlane) -> ImagePlane:
    if img.colorspace is not ColorSpace.RGB:
        raise DataError(f"rgb_to_ycbcr needs an RGB image, got {img.colorspace.value}")
    return ImagePlane.clipped(rgb_to_ycbcr_array(img.pixels), ColorSpace.YCBCR)


def ycbcr_to_rgb(img: ImagePlane) -> ImagePlane:
    if img.colorspace is not ColorSpace.YCBCR:
        raise DataError(f"ycbcr_to_rgb needs a YCbCr image, got {img.colorspace.value}")
    return ImagePlane.clipped(ycbcr_to_rgb_array(img.pixels), ColorSpace.RGB)


def luma(img: ImagePlane) -> np.ndarray:
    """Y plane (h, w) of a gray, RGB or YCbCr image."""
    if img.colorspace is ColorSpace.GRAY:
        return img.pixels[0]
    if img.colorspace is ColorSpace.RGB:
        return np.clip(np.einsum("j,jhw->hw", RGB_TO_YCBCR[0], img.pixels), 0.0, 1.0)
    return img.pixels[0]
