"""Base image reader interface."""

from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from cscfuse.imaging.planes import ImagePlane


class ImageReader(ABC):
    """Base class for image file readers."""

    @abstractmethod
    def read(self, file_path: Path) -> ImagePlane:
        """
        Decode an image file into an ImagePlane.

        Integer codes are mapped to [0, 1] by division by the format's maximum
        code value (255 for 8-bit, 65535 for 16-bit, maxval for Netpbm).
        """
        pass

    @abstractmethod
    def can_read(self, file_path: Path) -> bool:
        """Check if this reader can handle the given file."""
        pass

    @abstractmethod
    def write(self, img: ImagePlane, file_path: Path, bit_depth: int = 8) -> None:
        """Encode an image; codes are floor(v * max + 0.5)."""
        pass


def quantize(pixels: np.ndarray, max_code: int) -> np.ndarray:
    """Map [0, 1] floats to integer codes with round-half-away-from-zero (values are nonnegative)."""
    codes = np.floor(np.clip(pixels, 0.0, 1.0) * max_code + 0.5)
    return codes.astype(np.uint16 if max_code > 255 else np.uint8)
