"""Discovery of image files inside dataset directories."""

from pathlib import Path
from typing import Iterator, List

IMAGE_SUFFIXES = (".png", ".pgm", ".ppm", ".pnm")


def _is_valid_image_file(file_path: Path) -> bool:
    """
    Check if a file should be treated as an image.

    Filters out:
    - Files in __MACOSX directories
    - Files starting with ._ (macOS resource forks)
    """
    if "__MACOSX" in file_path.parts:
        return False
    if file_path.name.startswith("._"):
        return False
    return file_path.suffix.lower() in IMAGE_SUFFIXES


def find_image_files(directory: Path) -> Iterator[Path]:
    """
    Find all image files in a directory recursively, in sorted path order.

    Args:
        directory: Directory to search

    Yields:
        Path objects for image files
    """
    for path in sorted(Path(directory).rglob("*")):
        if path.is_file() and _is_valid_image_file(path):
            yield path


def list_images(directory: Path) -> List[Path]:
    return list(find_image_files(directory))
