"""Image value types: single planes and co-registered stacks."""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Sequence, Tuple, Union

import numpy as np

from cscfuse.errors import DataError, ShapeError

# Values this far outside [0, 1] are rounding noise and get clipped; anything beyond is an error.
RANGE_SLACK = 1e-6


class ColorSpace(str, Enum):
    GRAY = "gray"
    RGB = "rgb"
    YCBCR = "ycbcr"

    @property
    def channels(self) -> int:
        return 1 if self is ColorSpace.GRAY else 3


@dataclass
class ImagePlane:
    """
    Pixels (c, h, w) in [0, 1] with a color-space tag.

    2-D input is promoted to a single channel.
    """

    pixels: np.ndarray
    colorspace: ColorSpace = ColorSpace.GRAY

    def __post_init__(self):
        pixels = np.asarray(self.pixels, dtype=np.float64)
        if pixels.ndim == 2:
            pixels = pixels[None]
        if pixels.ndim != 3:
            raise ShapeError(f"Image pixels must be (c, h, w), got shape {pixels.shape}")
        self.colorspace = ColorSpace(self.colorspace)
        if pixels.shape[0] != self.colorspace.channels:
            raise ShapeError(
                f"{self.colorspace.value} image needs {self.colorspace.channels} channel(s), got {pixels.shape[0]}"
            )
        if not np.all(np.isfinite(pixels)):
            raise DataError("Image contains non-finite values")
        if pixels.size and (pixels.min() < -RANGE_SLACK or pixels.max() > 1 + RANGE_SLACK):
            raise DataError(f"Image values must lie in [0, 1], got [{pixels.min():.6g}, {pixels.max():.6g}]")
        self.pixels = np.clip(pixels, 0.0, 1.0)

    @classmethod
    def clipped(cls, pixels: np.ndarray, colorspace: ColorSpace = ColorSpace.GRAY) -> "ImagePlane":
        return cls(np.clip(pixels, 0.0, 1.0), colorspace)

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.pixels.shape[1], self.pixels.shape[2]

    def channel(self, index: int) -> np.ndarray:
        return self.pixels[index]


@dataclass
class ImageStack:
    """K >= 1 co-registered planes sharing shape and color space."""

    planes: List[ImagePlane] = field(default_factory=list)
    sources: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.planes = list(self.planes)
        if not self.planes:
            raise DataError("An image stack needs at least one image")
        first = self.planes[0]
        for i, plane in enumerate(self.planes[1:], start=1):
            if plane.pixels.shape != first.pixels.shape:
                raise ShapeError(
                    f"Image {i} has shape {plane.pixels.shape}, expected {first.pixels.shape} (images must be co-registered)"
                )
            if plane.colorspace is not first.colorspace:
                raise DataError(f"Image {i} is {plane.colorspace.value}, expected {first.colorspace.value}")

    def __len__(self) -> int:
        return len(self.planes)

    def __iter__(self) -> Iterator[ImagePlane]:
        return iter(self.planes)

    def __getitem__(self, index: int) -> ImagePlane:
        return self.planes[index]

    @property
    def colorspace(self) -> ColorSpace:
        return self.planes[0].colorspace

    @property
    def shape(self) -> Tuple[int, int]:
        return self.planes[0].shape

    def array(self) -> np.ndarray:
        """(K, c, h, w) array of all planes."""
        return np.stack([p.pixels for p in self.planes])


def as_plane(image: Union[ImagePlane, np.ndarray], colorspace: ColorSpace = ColorSpace.GRAY) -> ImagePlane:
    return image if isinstance(image, ImagePlane) else ImagePlane(image, colorspace)


def load_stack(paths: Sequence[Union[str, Path]]) -> ImageStack:
    from cscfuse.imaging.reader_factory import load_image

    return ImageStack([load_image(p) for p in paths], sources=[str(p) for p in paths])
