"""Binary Netpbm (P5 graymap / P6 pixmap) reader and writer."""

from pathlib import Path
from typing import List, Tuple

import numpy as np

from cscfuse.errors import DataError, ImageReadError
from cscfuse.imaging.base import ImageReader, quantize
from cscfuse.imaging.planes import ColorSpace, ImagePlane

MAGICS = {b"P5": ColorSpace.GRAY, b"P6": ColorSpace.RGB}


def _header(data: bytes) -> Tuple[List[bytes], int]:
    """Four header tokens (magic, width, height, maxval) and the offset of the raster."""
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageReadError("Truncated Netpbm header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


class NetpbmReader(ImageReader):
    """PGM/PPM with maxval up to 65535 (16-bit samples are big-endian)."""

    def can_read(self, file_path: Path) -> bool:
        if file_path.suffix.lower() not in (".pgm", ".ppm", ".pnm"):
            return False
        try:
            with open(file_path, "rb") as f:
                return f.read(2) in MAGICS
        except OSError:
            return False

    def read(self, file_path: Path) -> ImagePlane:
        data = Path(file_path).read_bytes()
        try:
            tokens, offset = _header(data)
        except ImageReadError as e:
            raise ImageReadError(f"{file_path}: {e}")
        magic = tokens[0]
        if magic not in MAGICS:
            raise ImageReadError(f"{file_path}: unsupported Netpbm type {magic!r} (only binary P5/P6)")
        try:
            width, height, maxval = (int(t) for t in tokens[1:])
        except ValueError:
            raise ImageReadError(f"{file_path}: malformed Netpbm header {tokens!r}")
        if not 1 <= maxval <= 65535:
            raise ImageReadError(f"{file_path}: maxval must be in [1, 65535], got {maxval}")

        colorspace = MAGICS[magic]
        channels = colorspace.channels
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        count = width * height * channels
        raster = data[offset:offset + count * dtype.itemsize]
        if len(raster) < count * dtype.itemsize:
            raise ImageReadError(
                f"{file_path}: raster truncated ({len(raster)} of {count * dtype.itemsize} bytes)"
            )
        codes = np.frombuffer(raster, dtype=dtype).astype(np.float64).reshape(height, width, channels)
        if codes.max(initial=0) > maxval:
            raise ImageReadError(f"{file_path}: sample exceeds maxval {maxval}")
        return ImagePlane(codes.transpose(2, 0, 1) / maxval, colorspace)

    def write(self, img: ImagePlane, file_path: Path, bit_depth: int = 8) -> None:
        if bit_depth not in (8, 16):
            raise DataError(f"Netpbm output supports bit depths 8 and 16, got {bit_depth}")
        if img.colorspace is ColorSpace.YCBCR:
            raise DataError("Convert YCbCr images to RGB before saving")
        maxval = 65535 if bit_depth == 16 else 255
        magic = b"P5" if img.colorspace is ColorSpace.GRAY else b"P6"
        codes = quantize(img.pixels, maxval).transpose(1, 2, 0)
        if bit_depth == 16:
            codes = codes.astype(">u2")
        height, width = img.shape
        with open(file_path, "wb") as f:
            f.write(magic + f"\n{width} {height}\n{maxval}\n".encode("ascii"))
            f.write(codes.tobytes())
