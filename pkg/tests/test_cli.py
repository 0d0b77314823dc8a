"""Tests for the command line interface."""

import hashlib
import json

import numpy as np
import pytest
from click.testing import CliRunner

from cscfuse.cli.main import cli
from cscfuse.errors import DivergenceError
from cscfuse.imaging.planes import ColorSpace, ImagePlane
from cscfuse.imaging.reader_factory import load_image, save_image
from cscfuse.pipelines import Checkpoint, build_model, save_checkpoint, synth_exposure_stack

TINY_IVF = """\
task: ivf
model:
  units: 2
  code_channels: 4
  base_radius: 3
train:
  epochs: 2
  batch_size: 2
  crop_size: 16
  lr: 0.001
  lr_milestones: []
"""


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def tiny_config_file(tmp_dir):
    path = tmp_dir / "tiny.yaml"
    path.write_text(TINY_IVF)
    return path


def _save_untrained(path, config):
    return save_checkpoint(Checkpoint.from_model(build_model(config.task, config.model, config.train.seed), config),
                           path)


def test_help(runner):
    """Test that the group and every command have help text."""
    result = runner.invoke(cli, ["--help"])
    assert result.exit_code == 0
    for command in ("train", "fuse", "eval", "ista", "gradcheck"):
        assert command in result.output
        assert runner.invoke(cli, [command, "--help"]).exit_code == 0


def test_version(runner):
    """Test the version option."""
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert "version" in result.output


def test_train_writes_checkpoint_and_log(runner, tmp_dir, tiny_config_file):
    """Test a synthetic training run end to end."""
    out = tmp_dir / "ivf.ckpt"
    result = runner.invoke(cli, ["train", "ivf", "--config", str(tiny_config_file), "--data", "synthetic",
                                 "--out", str(out)])
    assert result.exit_code == 0, result.output
    digest = hashlib.sha256(out.read_bytes()).hexdigest()
    assert f"Digest: {digest}" in result.output
    log = json.loads((tmp_dir / "ivf.ckpt.log.json").read_text())
    assert log["digest"] == digest
    assert len(log["epochs"]) == 2


def test_train_is_reproducible(runner, tmp_dir, tiny_config_file):
    """Test that the same seed gives the same checkpoint bytes and another seed does not."""
    outs = [tmp_dir / "a.ckpt", tmp_dir / "b.ckpt", tmp_dir / "c.ckpt"]
    seeds = ["0", "0", "1"]
    for out, seed in zip(outs, seeds):
        result = runner.invoke(cli, ["train", "ivf", "--config", str(tiny_config_file), "--data", "synthetic",
                                     "--out", str(out), "--seed", seed])
        assert result.exit_code == 0, result.output
    assert outs[0].read_bytes() == outs[1].read_bytes()
    assert outs[0].read_bytes() != outs[2].read_bytes()


def test_train_requires_data(runner, tmp_dir):
    """Test that a missing --data is a usage error."""
    result = runner.invoke(cli, ["train", "ivf", "--out", str(tmp_dir / "x.ckpt")])
    assert result.exit_code == 2


def test_train_rejects_unknown_config_key(runner, tmp_dir):
    """Test that configuration errors exit with code 2."""
    config = tmp_dir / "bad.yaml"
    config.write_text("train:\n  learning_rate: 0.1\n")
    result = runner.invoke(cli, ["train", "ivf", "--config", str(config), "--data", "synthetic",
                                 "--out", str(tmp_dir / "x.ckpt")])
    assert result.exit_code == 2
    assert "learning_rate" in result.output


def test_train_with_bad_data_spec(runner, tmp_dir, tiny_config_file):
    """Test that dataset errors exit with code 3."""
    result = runner.invoke(cli, ["train", "ivf", "--config", str(tiny_config_file), "--data",
                                 str(tmp_dir / "nowhere"), "--out", str(tmp_dir / "x.ckpt")])
    assert result.exit_code == 3


def test_train_divergence_keeps_last_good(runner, tmp_dir):
    """Test that a diverging run exits with code 4 and writes the last good checkpoint."""
    config = tmp_dir / "hot.yaml"
    config.write_text(TINY_IVF.replace("lr: 0.001", "lr: 1.0e+30").replace("epochs: 2", "epochs: 4"))
    out = tmp_dir / "hot.ckpt"
    result = runner.invoke(cli, ["train", "ivf", "--config", str(config), "--data", "synthetic", "--out", str(out)])
    assert result.exit_code == 4, result.output
    assert not out.exists()
    assert (tmp_dir / "hot.ckpt.last_good").exists()
    assert (tmp_dir / "hot.ckpt.log.json").exists()


def test_train_divergence_on_first_step_says_nothing_was_saved(runner, tmp_dir, tiny_config_file, monkeypatch):
    """Test that a run diverging before its first update reports that no fallback checkpoint exists."""
    def diverge(dataset, cfg, log):
        raise DivergenceError("Training diverged: non-finite loss (step=1)", {"step": 1}, None)

    monkeypatch.setattr("cscfuse.pipelines.ivf.ivfn_train", diverge)
    out = tmp_dir / "cold.ckpt"
    result = runner.invoke(cli, ["train", "ivf", "--config", str(tiny_config_file), "--data", "synthetic",
                                 "--out", str(out)])
    assert result.exit_code == 4, result.output
    assert "No last good checkpoint written: training diverged at step 1" in result.output
    assert not (tmp_dir / "cold.ckpt.last_good").exists()
    assert (tmp_dir / "cold.ckpt.log.json").exists()


def test_fuse_ivf(runner, tmp_dir, gray_png_pair, tiny_ivf_config):
    """Test IVF fusion of a PNG pair."""
    ckpt = tmp_dir / "ivf.ckpt"
    _save_untrained(ckpt, tiny_ivf_config)
    out = tmp_dir / "fused.png"
    result = runner.invoke(cli, ["fuse", "ivf", str(gray_png_pair[0]), str(gray_png_pair[1]), "--ckpt", str(ckpt),
                                 "--out", str(out), "--base-strategy", "average"])
    assert result.exit_code == 0, result.output
    assert load_image(out).shape == (32, 32)


def test_fuse_ivf_needs_two_inputs(runner, tmp_dir, gray_png_pair, tiny_ivf_config):
    """Test that a single IVF input is a data error."""
    ckpt = tmp_dir / "ivf.ckpt"
    _save_untrained(ckpt, tiny_ivf_config)
    result = runner.invoke(cli, ["fuse", "ivf", str(gray_png_pair[0]), "--ckpt", str(ckpt),
                                 "--out", str(tmp_dir / "fused.png")])
    assert result.exit_code == 3


def test_fuse_with_wrong_checkpoint_kind(runner, tmp_dir, gray_png_pair, tiny_ivf_config):
    """Test that an IVF checkpoint cannot drive MEF fusion."""
    ckpt = tmp_dir / "ivf.ckpt"
    _save_untrained(ckpt, tiny_ivf_config)
    result = runner.invoke(cli, ["fuse", "mef", str(gray_png_pair[0]), str(gray_png_pair[1]), "--ckpt", str(ckpt),
                                 "--out", str(tmp_dir / "fused.png")])
    assert result.exit_code == 2


def test_fuse_with_corrupted_checkpoint(runner, tmp_dir, gray_png_pair, tiny_ivf_config):
    """Test that a damaged checkpoint is a data error."""
    ckpt = tmp_dir / "ivf.ckpt"
    _save_untrained(ckpt, tiny_ivf_config)
    ckpt.write_bytes(ckpt.read_bytes()[:-10])
    result = runner.invoke(cli, ["fuse", "ivf", str(gray_png_pair[0]), str(gray_png_pair[1]), "--ckpt", str(ckpt),
                                 "--out", str(tmp_dir / "fused.png")])
    assert result.exit_code == 3


def test_fuse_mef(runner, tmp_dir, tiny_mef_config):
    """Test MEF fusion of a color stack, and the single-exposure error."""
    ckpt = tmp_dir / "mef.ckpt"
    _save_untrained(ckpt, tiny_mef_config)
    paths = []
    for i, plane in enumerate(synth_exposure_stack(0, k=3, size=24)):
        paths.append(str(save_image(plane, tmp_dir / f"e{i}.png")))
    out = tmp_dir / "fused.png"
    result = runner.invoke(cli, ["fuse", "mef", *paths, "--ckpt", str(ckpt), "--out", str(out)])
    assert result.exit_code == 0, result.output
    fused = load_image(out)
    assert fused.colorspace is ColorSpace.RGB and fused.shape == (24, 24)

    result = runner.invoke(cli, ["fuse", "mef", paths[0], "--ckpt", str(ckpt), "--out", str(out)])
    assert result.exit_code == 2


def _mmf_inputs(tmp_dir, rng, guide_size):
    guide = save_image(ImagePlane(rng.uniform(size=(3, guide_size, guide_size)), ColorSpace.RGB),
                       tmp_dir / "guide.png")
    bands = [save_image(ImagePlane(rng.uniform(size=(8, 8))), tmp_dir / f"lr{b}.png", bit_depth=16) for b in (0, 1)]
    return [str(guide)] + [str(b) for b in bands]


def test_fuse_mmf(runner, tmp_dir, rng, tiny_mmf_config):
    """Test that MMF fusion writes one 16-bit band image per input band."""
    ckpt = tmp_dir / "mmf.ckpt"
    _save_untrained(ckpt, tiny_mmf_config)
    out = tmp_dir / "bands"
    result = runner.invoke(cli, ["fuse", "mmf", *_mmf_inputs(tmp_dir, rng, 16), "--ckpt", str(ckpt),
                                 "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert sorted(p.name for p in out.iterdir()) == ["band_00.png", "band_01.png"]
    assert load_image(out / "band_00.png").shape == (16, 16)


def test_fuse_mmf_shape_mismatch(runner, tmp_dir, rng, tiny_mmf_config):
    """Test that a guide of the wrong size exits with code 3 and names both shapes."""
    ckpt = tmp_dir / "mmf.ckpt"
    _save_untrained(ckpt, tiny_mmf_config)
    result = runner.invoke(cli, ["fuse", "mmf", *_mmf_inputs(tmp_dir, rng, 20), "--ckpt", str(ckpt),
                                 "--out", str(tmp_dir / "bands")])
    assert result.exit_code == 3
    assert "(1, 2, 8, 8)" in result.output and "(1, 3, 20, 20)" in result.output


def test_eval_ivf_formats(runner, tmp_dir, gray_png_pair):
    """Test that the JSON and CSV reports carry the same IVF metrics."""
    ir, vis = (str(p) for p in gray_png_pair)
    base = ["eval", "ivf", "--inputs", ir, "--inputs", vis, "--fused", vis]
    result = runner.invoke(cli, base + ["--format", "json", "--out", str(tmp_dir / "r.json")])
    assert result.exit_code == 0, result.output
    row = json.loads((tmp_dir / "r.json").read_text())["rows"][0]
    assert list(row)[:7] == ["EN", "MI", "SD", "SF", "VIF(single-scale)", "AG", "SCD"]
    assert row["sources"] == [ir, vis]

    result = runner.invoke(cli, base + ["--format", "csv", "--out", str(tmp_dir / "r.csv")])
    assert result.exit_code == 0, result.output
    header, values = (tmp_dir / "r.csv").read_text().splitlines()[:2]
    assert header.split(",")[:7] == list(row)[:7]
    assert float(values.split(",")[0]) == pytest.approx(row["EN"])


def test_eval_mmf_identical_bands(runner, tmp_dir, rng):
    """Test that a perfect reconstruction reports infinite PSNR and writes error maps."""
    bands = [str(save_image(ImagePlane(rng.uniform(size=(8, 8))), tmp_dir / f"b{b}.png", bit_depth=16))
             for b in (0, 1)]
    args = ["eval", "mmf", "--ref", bands[0], "--ref", bands[1], "--fused", bands[0], "--fused", bands[1],
            "--out", str(tmp_dir / "r.json"), "--error-map", str(tmp_dir / "maps")]
    result = runner.invoke(cli, args)
    assert result.exit_code == 0, result.output
    row = json.loads((tmp_dir / "r.json").read_text())["rows"][0]
    assert row["PSNR"] == "inf"
    assert row["SSIM"] == pytest.approx(1.0)
    assert sorted(p.name for p in (tmp_dir / "maps").iterdir()) == ["error_00.png", "error_01.png"]
    assert np.all(load_image(tmp_dir / "maps" / "error_00.png").pixels == 0)


def test_eval_batch(runner, tmp_dir, gray_png_pair):
    """Test a batch manifest of two rows."""
    (tmp_dir / "manifest.json").write_text(json.dumps({"task": "ivf", "items": [
        {"inputs": ["ir.png", "vis.png"], "fused": "vis.png"},
        {"inputs": ["ir.png", "vis.png"], "fused": ["ir.png"]},
    ]}))
    result = runner.invoke(cli, ["eval", "ivf", "--batch", str(tmp_dir), "--format", "json",
                                 "--out", str(tmp_dir / "r.json")])
    assert result.exit_code == 0, result.output
    assert len(json.loads((tmp_dir / "r.json").read_text())["rows"]) == 2

    result = runner.invoke(cli, ["eval", "mef", "--batch", str(tmp_dir)])
    assert result.exit_code == 3


def test_eval_needs_fused(runner, gray_png_pair):
    """Test that a missing fused image is a data error."""
    result = runner.invoke(cli, ["eval", "ivf", "--inputs", str(gray_png_pair[0])])
    assert result.exit_code == 3


def test_ista_trace(runner):
    """Test the objective trace printed by the reference solver."""
    result = runner.invoke(cli, ["ista", "--iters", "10", "--atoms", "4"])
    assert result.exit_code == 0, result.output
    lines = result.output.splitlines()
    assert lines[0].startswith("rho: ")
    trace = [float(line.split()[1]) for line in lines[1:-1]]
    assert len(trace) == 11
    assert all(b <= a * (1 + 1e-12) for a, b in zip(trace, trace[1:]))
    assert lines[-1].startswith("sparsity: ")


def test_ista_large_lambda_gives_zero_code(runner):
    """Test that a huge sparsity weight leaves every coefficient at zero."""
    result = runner.invoke(cli, ["ista", "--lambda", "1e6", "--iters", "3"])
    assert result.exit_code == 0, result.output
    assert "sparsity: 100.00%" in result.output


@pytest.mark.parametrize("args", [["--kernel-size", "4"], ["--rho", "0"], ["--rho", "fast"]])
def test_ista_bad_parameters(runner, args):
    """Test parameter validation."""
    assert runner.invoke(cli, ["ista"] + args).exit_code == 2


def test_ista_small_rho_diverges(runner):
    """Test that a step size far above 1/L diverges with code 4."""
    result = runner.invoke(cli, ["ista", "--rho", "0.001", "--lambda", "0.001", "--iters", "2000"])
    assert result.exit_code == 4


def test_gradcheck_passes(runner):
    """Test a passing gradient check suite."""
    result = runner.invoke(cli, ["gradcheck", "--module", "losses"])
    assert result.exit_code == 0, result.output
    assert "gradient checks passed" in result.output


def test_gradcheck_detects_corruption(runner):
    """Test that a doubled backward pass is reported with exit code 1."""
    result = runner.invoke(cli, ["gradcheck", "--module", "tensor_core", "--corrupt", "conv2d"])
    assert result.exit_code == 1
    assert "Gradient check failed for:" in result.output
    assert "conv2d" in result.output
