"""Factory for image readers, plus the load/save entry points."""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

from cscfuse.errors import DataError, ImageReadError
from cscfuse.imaging.base import ImageReader
from cscfuse.imaging.files import _is_valid_image_file
from cscfuse.imaging.netpbm_reader import NetpbmReader
from cscfuse.imaging.planes import ImagePlane
from cscfuse.imaging.png_reader import PngReader

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


def get_reader(file_path: Path) -> Optional[ImageReader]:
    """
    Get the appropriate reader for a given file.

    Args:
        file_path: Path to the image file

    Returns:
        Reader instance or None if no reader can handle the file
    """
    readers: List[ImageReader] = [
        PngReader(),
        NetpbmReader(),
    ]

    for reader in readers:
        if reader.can_read(file_path):
            return reader

    return None


def _writer_for(file_path: Path) -> ImageReader:
    suffix = file_path.suffix.lower()
    if suffix == ".png":
        return PngReader()
    if suffix in (".pgm", ".ppm", ".pnm"):
        return NetpbmReader()
    raise DataError(f"Unsupported output format {suffix!r} for {file_path}; use .png, .pgm or .ppm")


def load_image(path: PathLike) -> ImagePlane:
    """Read an 8/16-bit PNG or binary PGM/PPM into an ImagePlane with values in [0, 1]."""
    file_path = Path(path)
    if not file_path.is_file():
        raise ImageReadError(f"Image not found: {file_path}")
    reader = get_reader(file_path)
    if reader is None:
        raise ImageReadError(f"No reader for {file_path} (expected PNG or binary PGM/PPM)")
    return reader.read(file_path)


def save_image(img: ImagePlane, path: PathLike, bit_depth: int = 8) -> Path:
    """Write an image; the format follows the file suffix. Returns the path written."""
    file_path = Path(path)
    file_path.parent.mkdir(parents=True, exist_ok=True)
    _writer_for(file_path).write(img, file_path, bit_depth=bit_depth)
    logger.debug(f"Wrote {file_path}")
    return file_path


def read_all_images(file_paths: Sequence[Path], silent: bool = False) -> List[Tuple[Path, ImagePlane]]:
    """
    Read several images, skipping the ones that cannot be decoded.

    Args:
        file_paths: Candidate image paths
        silent: If True, suppress warning messages

    Returns:
        (path, image) pairs for every file that was read
    """
    images = []
    skipped_files = []

    for file_path in file_paths:
        file_path = Path(file_path)
        if not _is_valid_image_file(file_path) or not file_path.is_file():
            if not silent:
                logger.debug(f"Skipping non-image: {file_path}")
            continue
        try:
            images.append((file_path, load_image(file_path)))
        except ImageReadError as e:
            if not silent:
                logger.warning(f"Failed to read {file_path}: {e}")
            skipped_files.append(str(file_path))

    if skipped_files and not silent:
        logger.warning(f"Skipped {len(skipped_files)} file(s) that could not be read")

    return images
