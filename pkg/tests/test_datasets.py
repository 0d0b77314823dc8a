"""Tests for synthetic scenes and dataset manifests."""

import json

import numpy as np
import pytest

from cscfuse.config import build_run_config
from cscfuse.errors import DataError
from cscfuse.imaging.planes import ColorSpace, ImagePlane
from cscfuse.imaging.reader_factory import save_image
from cscfuse.pipelines import synth_exposure_stack, synth_ivf_pair, synth_spectral_scene, wald_protocol
from cscfuse.pipelines.datasets import load_dataset, load_manifest, synthetic_dataset
from cscfuse.pipelines.synthetic import guide_projection


def test_ivf_pair_is_seeded():
    """Test that the same seed gives the same pair and another seed does not."""
    ir, vis = synth_ivf_pair(3, size=32)
    ir2, vis2 = synth_ivf_pair(3, size=32)
    np.testing.assert_array_equal(ir.pixels, ir2.pixels)
    np.testing.assert_array_equal(vis.pixels, vis2.pixels)
    assert not np.array_equal(vis.pixels, synth_ivf_pair(4, size=32)[1].pixels)
    assert ir.shape == vis.shape == (32, 32)
    assert ir.colorspace is ColorSpace.GRAY


def test_exposure_stack_brightens():
    """Test that exposures are ordered darkest first and tagged with their EV."""
    stack = synth_exposure_stack(1, k=3, size=32)
    means = [p.pixels.mean() for p in stack]
    assert means[0] < means[1] < means[2]
    assert stack.sources == ["synthetic:1:ev-2.00", "synthetic:1:ev+0.00", "synthetic:1:ev+2.00"]
    assert stack.colorspace is ColorSpace.RGB


def test_exposure_stack_variants():
    """Test gray stacks, single exposures and the k check."""
    assert synth_exposure_stack(0, k=2, size=16, color=False).colorspace is ColorSpace.GRAY
    assert synth_exposure_stack(0, k=1, size=16).sources == ["synthetic:0:ev+0.00"]
    with pytest.raises(ValueError):
        synth_exposure_stack(0, k=0)


def test_guide_projection_rows():
    """Test that each guide channel is a normalized response."""
    projection = guide_projection(8)
    assert projection.shape == (3, 8)
    assert np.all(projection > 0)
    np.testing.assert_allclose(projection.sum(axis=1), 1.0)
    np.testing.assert_allclose(guide_projection(1), np.ones((3, 1)))


def test_spectral_scene():
    """Test scene shapes, the guide relation and the simulated input."""
    lr, guide, hr = synth_spectral_scene(2, bands=5, scale=4, size=32)
    assert hr.shape == (5, 32, 32)
    assert guide.shape == (3, 32, 32)
    assert lr.shape == (5, 8, 8)
    assert hr.min() >= 0.05 - 1e-9 and hr.max() <= 0.95 + 1e-9
    np.testing.assert_allclose(guide, np.einsum("gb,bhw->ghw", guide_projection(5), hr))
    np.testing.assert_allclose(lr, wald_protocol(hr, guide, 4)[0])


def test_synthetic_dataset_defaults(tiny_ivf_config, tiny_mef_config, tiny_mmf_config):
    """Test the default number of synthetic items per task."""
    assert len(synthetic_dataset(tiny_ivf_config, size=16)) == 2
    stacks = synthetic_dataset(tiny_mef_config, size=16)
    assert len(stacks) == 4 and all(len(s) == 3 for s in stacks)
    scenes = synthetic_dataset(tiny_mmf_config, size=16)
    assert len(scenes) == 1
    lr, guide, hr = scenes[0]
    assert lr.shape == (2, 8, 8) and hr.shape == (2, 16, 16)


def test_load_dataset_synthetic(tiny_ivf_config):
    """Test the synthetic data specs."""
    assert len(load_dataset("synthetic:3", tiny_ivf_config)) == 6
    with pytest.raises(DataError):
        load_dataset("synthetic:many", tiny_ivf_config)


def _write_manifest(directory, task, items):
    path = directory / "manifest.json"
    path.write_text(json.dumps({"task": task, "items": items}))
    return path


def test_ivf_manifest(tmp_dir, gray_png_pair, tiny_ivf_config):
    """Test pairs and single images from a manifest directory."""
    _write_manifest(tmp_dir, "ivf", [{"infrared": "ir.png", "visible": "vis.png"}, {"image": "vis.png"}])
    images = load_dataset(str(tmp_dir), tiny_ivf_config)
    assert len(images) == 3
    assert all(img.shape == (32, 32) for img in images)


def test_mef_manifest(tmp_dir, tiny_mef_config):
    """Test exposure stacks listed in a manifest."""
    stack = synth_exposure_stack(0, k=3, size=16)
    names = []
    for i, plane in enumerate(stack):
        save_image(plane, tmp_dir / f"e{i}.png")
        names.append(f"e{i}.png")
    path = _write_manifest(tmp_dir, "mef", [{"exposures": names}])
    stacks = load_dataset(str(path), tiny_mef_config)
    assert len(stacks) == 1 and len(stacks[0]) == 3
    assert stacks[0].colorspace is ColorSpace.RGB


def test_mmf_manifest(tmp_dir, tiny_mmf_config):
    """Test band files with a simulated and a given low-resolution input."""
    _, guide, hr = synth_spectral_scene(0, bands=2, scale=2, size=16)
    for b, band in enumerate(hr):
        save_image(ImagePlane(band), tmp_dir / f"b{b}.png", bit_depth=16)
        save_image(ImagePlane(band[::2, ::2]), tmp_dir / f"lr{b}.png", bit_depth=16)
    save_image(ImagePlane(guide, ColorSpace.RGB), tmp_dir / "rgb.png")
    _write_manifest(tmp_dir, "mmf", [
        {"bands": ["b0.png", "b1.png"], "guide": "rgb.png"},
        {"bands": ["b0.png", "b1.png"], "guide": "rgb.png", "lr": ["lr0.png", "lr1.png"]},
    ])
    triples = load_dataset(str(tmp_dir), tiny_mmf_config)
    assert [t[0].shape for t in triples] == [(2, 8, 8), (2, 8, 8)]
    assert triples[0][1].shape == (3, 16, 16)
    np.testing.assert_allclose(triples[1][2], hr, atol=1 / 65535)
    np.testing.assert_allclose(triples[1][0], hr[:, ::2, ::2], atol=1 / 65535)


def test_manifest_errors(tmp_dir, tiny_mef_config):
    """Test missing, malformed and mismatched manifests."""
    with pytest.raises(DataError):
        load_manifest(tmp_dir)
    (tmp_dir / "manifest.json").write_text("{not json")
    with pytest.raises(DataError):
        load_manifest(tmp_dir)
    (tmp_dir / "manifest.json").write_text(json.dumps({"items": []}))
    with pytest.raises(DataError):
        load_manifest(tmp_dir)
    _write_manifest(tmp_dir, "ivf", [])
    with pytest.raises(DataError, match="task"):
        load_dataset(str(tmp_dir), tiny_mef_config)
    _write_manifest(tmp_dir, "mef", [{"images": []}])
    with pytest.raises(DataError, match="exposures"):
        load_dataset(str(tmp_dir), tiny_mef_config)


def test_manifest_item_needs_an_image(tmp_dir):
    """Test that IVF items without image keys are rejected."""
    cfg = build_run_config("ivf")
    _write_manifest(tmp_dir, "ivf", [{"thermal": "ir.png"}])
    with pytest.raises(DataError):
        load_dataset(str(tmp_dir), cfg)


def test_manifest_directories(tmp_dir, tiny_ivf_config, tiny_mef_config):
    """Test directory entries for IVF images and exposure lists."""
    stack = synth_exposure_stack(1, k=3, size=16)
    for i, plane in enumerate(stack):
        save_image(plane, tmp_dir / "s1" / f"{i}.png")
    (tmp_dir / "s1" / "._0.png").write_bytes(b"resource fork")
    _write_manifest(tmp_dir, "mef", [{"exposures": "s1"}])
    stacks = load_dataset(str(tmp_dir), tiny_mef_config)
    assert len(stacks[0]) == 3
    np.testing.assert_allclose(stacks[0][0].pixels, stack[0].pixels, atol=0.5 / 255 + 1e-12)

    save_image(ImagePlane(np.full((16, 16), 0.5)), tmp_dir / "gray" / "a.png")
    (tmp_dir / "gray" / "broken.png").write_bytes(b"not a png")
    _write_manifest(tmp_dir, "ivf", [{"directory": "gray"}])
    assert len(load_dataset(str(tmp_dir), tiny_ivf_config)) == 1

    _write_manifest(tmp_dir, "mef", [{"exposures": "missing"}])
    with pytest.raises(DataError):
        load_dataset(str(tmp_dir), tiny_mef_config)
