"""
Training datasets: JSON manifests on disk, or seeded synthetic scenes.

A manifest lists items relative to its own directory:

    {"task": "ivf", "items": [{"infrared": "ir/01.png", "visible": "vis/01.png"},
                              {"image": "extra/02.png"}, {"directory": "more/"}]}
    {"task": "mef", "items": [{"exposures": ["s1/a.png", "s1/b.png", "s1/c.png"]}]}
    {"task": "mmf", "items": [{"bands": ["c1/b00.png", ...], "guide": "c1/rgb.png"}]}

Exposure and band lists may instead name a directory, whose image files are
taken in sorted order. An IVF "directory" item adds every readable image below
it. MMF items may also give "lr" band files; without them the low-resolution
input is simulated from the bands with the Wald protocol.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Union

import numpy as np

from cscfuse.config import RunConfig
from cscfuse.errors import DataError
from cscfuse.imaging.files import list_images
from cscfuse.imaging.planes import ImagePlane, load_stack
from cscfuse.imaging.reader_factory import load_image, read_all_images
from cscfuse.pipelines.mmf import wald_protocol
from cscfuse.pipelines.synthetic import synth_exposure_stack, synth_ivf_pair, synth_spectral_scene

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
SYNTHETIC = "synthetic"


@dataclass
class Manifest:
    task: str
    root: Path
    items: List[Dict[str, Any]] = field(default_factory=list)


def load_manifest(path: Union[str, Path]) -> Manifest:
    """Read a manifest file, or `manifest.json` inside a directory."""
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise DataError(f"Dataset manifest not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise DataError(f"Could not parse manifest {path}: {e}")
    if not isinstance(raw, dict) or "task" not in raw or not isinstance(raw.get("items"), list):
        raise DataError(f"Manifest {path} must be an object with 'task' and an 'items' list")
    return Manifest(task=raw["task"], root=path.parent, items=raw["items"])


def _path(manifest: Manifest, relative: str) -> Path:
    return manifest.root / relative


def _require(item: Dict[str, Any], key: str, index: int) -> Any:
    if key not in item:
        raise DataError(f"Manifest item {index} has no {key!r} entry")
    return item[key]


def _paths(manifest: Manifest, entry: Union[str, List[str]]) -> List[Path]:
    """A list of files, or a directory standing for its image files."""
    if isinstance(entry, str):
        directory = _path(manifest, entry)
        if not directory.is_dir():
            raise DataError(f"{directory} is not a directory of images")
        paths = list_images(directory)
        if not paths:
            raise DataError(f"No images found in {directory}")
        return paths
    return [_path(manifest, p) for p in entry]


def _band_cube(manifest: Manifest, entry: Union[str, List[str]]) -> np.ndarray:
    planes = [load_image(p) for p in _paths(manifest, entry)]
    return np.stack([p.pixels[0] for p in planes])


def load_ivf_dataset(manifest: Manifest) -> List[ImagePlane]:
    images: List[ImagePlane] = []
    for i, item in enumerate(manifest.items):
        if "directory" in item:
            found = read_all_images(list_images(_path(manifest, item["directory"])))
            if not found:
                raise DataError(f"Manifest item {i}: no readable images in {item['directory']}")
            images.extend(img for _, img in found)
            continue
        keys = [k for k in ("image", "infrared", "visible") if k in item]
        if not keys:
            raise DataError(f"Manifest item {i} needs 'image', 'directory' or an 'infrared'/'visible' pair")
        images.extend(load_image(_path(manifest, item[k])) for k in keys)
    return images


def load_mef_dataset(manifest: Manifest):
    return [
        load_stack(_paths(manifest, _require(item, "exposures", i)))
        for i, item in enumerate(manifest.items)
    ]


def load_mmf_dataset(manifest: Manifest, scale: int):
    triples = []
    for i, item in enumerate(manifest.items):
        hr = _band_cube(manifest, _require(item, "bands", i))
        guide = load_image(_path(manifest, _require(item, "guide", i))).pixels
        if "lr" in item:
            triples.append((_band_cube(manifest, item["lr"]), guide, hr))
        else:
            triples.append(wald_protocol(hr, guide, scale))
    return triples


def synthetic_dataset(cfg: RunConfig, count: int = 0, seed: int = 0, size: int = 64) -> list:
    """
    Desk-scale synthetic training set for the configured task.

    Defaults: one IVF pair (both images train the autoencoder), four
    three-exposure stacks, or one spectral scene with model.in_channels bands.
    """
    if cfg.task == "ivf":
        images: List[ImagePlane] = []
        for k in range(count or 1):
            images.extend(synth_ivf_pair(seed + k, size))
        return images
    if cfg.task == "mef":
        return [synth_exposure_stack(seed + k, 3, size) for k in range(count or 4)]
    return [synth_spectral_scene(seed + k, cfg.model.in_channels, cfg.model.scale, size)
            for k in range(count or 1)]


def load_dataset(spec: str, cfg: RunConfig) -> list:
    """
    Resolve a --data argument.

    Args:
        spec: Manifest path, directory holding manifest.json, or
              'synthetic' / 'synthetic:N' for N seeded scenes
        cfg: Run configuration (task, bands, scale)
    """
    if spec == SYNTHETIC or spec.startswith(SYNTHETIC + ":"):
        _, _, count = spec.partition(":")
        try:
            n = int(count) if count else 0
        except ValueError:
            raise DataError(f"Bad synthetic dataset size in {spec!r}")
        logger.info(f"Using synthetic {cfg.task} data")
        return synthetic_dataset(cfg, n, seed=cfg.train.seed)

    manifest = load_manifest(spec)
    if manifest.task != cfg.task:
        raise DataError(f"Manifest is for task {manifest.task!r}, run is {cfg.task!r}")
    logger.info(f"Loading {len(manifest.items)} {cfg.task} item(s) from {manifest.root}")
    if cfg.task == "ivf":
        return load_ivf_dataset(manifest)
    if cfg.task == "mef":
        return load_mef_dataset(manifest)
    return load_mmf_dataset(manifest, cfg.model.scale)
