"""PNG reader/writer built on Pillow."""

import logging
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from cscfuse.errors import DataError, ImageReadError
from cscfuse.imaging.base import ImageReader, quantize
from cscfuse.imaging.planes import ColorSpace, ImagePlane

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
# PNG color types
GRAY, RGB, PALETTE, GRAY_ALPHA, RGB_ALPHA = 0, 2, 3, 4, 6


def _ihdr(file_path: Path):
    """(bit_depth, color_type) from the IHDR chunk."""
    with open(file_path, "rb") as f:
        head = f.read(33)
    if len(head) < 33 or head[:8] != PNG_SIGNATURE or head[12:16] != b"IHDR":
        raise ImageReadError(f"{file_path} is not a valid PNG file")
    _, _, bit_depth, color_type = struct.unpack(">IIBB", head[16:26])
    return bit_depth, color_type


class PngReader(ImageReader):
    """8-bit and 16-bit grayscale PNG, 8-bit RGB(A)/palette PNG."""

    def can_read(self, file_path: Path) -> bool:
        if file_path.suffix.lower() != ".png":
            return False
        try:
            with open(file_path, "rb") as f:
                return f.read(8) == PNG_SIGNATURE
        except OSError:
            return False

    def read(self, file_path: Path) -> ImagePlane:
        bit_depth, color_type = _ihdr(file_path)
        if bit_depth == 16 and color_type in (RGB, RGB_ALPHA, GRAY_ALPHA):
            raise ImageReadError(
                f"{file_path}: 16-bit color PNG is not supported; store 16-bit color images as PPM (P6, maxval 65535)"
            )
        if bit_depth not in (1, 2, 4, 8, 16):
            raise ImageReadError(f"{file_path}: unsupported PNG bit depth {bit_depth}")

        try:
            with Image.open(file_path) as im:
                im.load()
                if color_type in (GRAY,) and bit_depth == 16:
                    codes = np.asarray(im, dtype=np.float64)
                    return ImagePlane(codes / 65535.0, ColorSpace.GRAY)
                if color_type in (GRAY, GRAY_ALPHA):
                    codes = np.asarray(im.convert("L"), dtype=np.float64)
                    return ImagePlane(codes / 255.0, ColorSpace.GRAY)
                if color_type == RGB_ALPHA:
                    logger.debug(f"Dropping alpha channel of {file_path}")
                codes = np.asarray(im.convert("RGB"), dtype=np.float64)
                return ImagePlane(codes.transpose(2, 0, 1) / 255.0, ColorSpace.RGB)
        except (OSError, ValueError) as e:
            raise ImageReadError(f"Could not decode {file_path}: {e}")

    def write(self, img: ImagePlane, file_path: Path, bit_depth: int = 8) -> None:
        if bit_depth not in (8, 16):
            raise DataError(f"PNG output supports bit depths 8 and 16, got {bit_depth}")
        if img.colorspace is ColorSpace.YCBCR:
            raise DataError("Convert YCbCr images to RGB before saving")
        if img.colorspace is ColorSpace.RGB:
            if bit_depth == 16:
                raise DataError("16-bit color output is written as PPM; use a .ppm path")
            Image.fromarray(quantize(img.pixels, 255).transpose(1, 2, 0), mode="RGB").save(file_path)
            return
        if bit_depth == 16:
            Image.fromarray(quantize(img.pixels[0], 65535)).save(file_path)
        else:
            Image.fromarray(quantize(img.pixels[0], 255), mode="L").save(file_path)
