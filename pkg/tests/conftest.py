"""Pytest configuration and fixtures."""

import pytest
from pathlib import Path
import tempfile
import shutil

import numpy as np

from cscfuse.config import build_run_config
from cscfuse.imaging.planes import ColorSpace, ImagePlane
from cscfuse.imaging.reader_factory import save_image


@pytest.fixture
def tmp_dir():
    """Create a temporary directory for tests."""
    tmp = tempfile.mkdtemp()
    yield Path(tmp)
    shutil.rmtree(tmp, ignore_errors=True)


@pytest.fixture
def rng():
    """Seeded generator so every test draws the same inputs."""
    return np.random.default_rng(1234)


@pytest.fixture
def smooth_gray():
    """Smooth 32x32 gray image with values well inside (0, 1)."""
    y, x = np.mgrid[0:32, 0:32] / 31.0
    return ImagePlane(0.5 + 0.3 * np.sin(2.0 * x) * np.cos(1.5 * y))


@pytest.fixture
def textured_gray(rng):
    """Gray image mixing a gradient with seeded noise."""
    y, x = np.mgrid[0:32, 0:32] / 31.0
    return ImagePlane(np.clip(0.2 + 0.5 * x * y + 0.1 * rng.uniform(size=(32, 32)), 0.0, 1.0))


@pytest.fixture
def color_image(rng):
    """16x16 RGB image."""
    return ImagePlane(rng.uniform(0.1, 0.9, size=(3, 16, 16)), ColorSpace.RGB)


@pytest.fixture
def tiny_ivf_config():
    """Small IVF run: a handful of cheap steps on 16x16 crops."""
    return build_run_config("ivf", {
        "model": {"units": 2, "code_channels": 4, "base_radius": 3},
        "train": {"epochs": 2, "batch_size": 2, "crop_size": 16, "lr": 1e-3, "lr_milestones": []},
    })


@pytest.fixture
def tiny_mef_config():
    """Small MEF run."""
    return build_run_config("mef", {
        "model": {"units": 2, "code_channels": 4},
        "train": {"epochs": 2, "batch_size": 2, "crop_size": 16, "lr": 1e-3},
    })


@pytest.fixture
def tiny_mmf_config():
    """Small MMF run with 2 bands at scale 2."""
    return build_run_config("mmf", {
        "model": {"units": 1, "code_channels": 4, "in_channels": 2, "guide_channels": 3, "scale": 2,
                  "fgf_radius": 2, "fgf_subsample": 2},
        "train": {"epochs": 2, "batch_size": 1, "crop_size": 16, "lr": 1e-3},
    })


@pytest.fixture
def gray_png_pair(tmp_dir, smooth_gray, textured_gray):
    """Two co-registered gray PNG files."""
    first = save_image(smooth_gray, tmp_dir / "ir.png")
    second = save_image(textured_gray, tmp_dir / "vis.png")
    return first, second
