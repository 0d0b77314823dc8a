"""Tests for the training losses against direct scalar-loop evaluations."""

from pathlib import Path

import numpy as np
import pytest

from cscfuse.config import load_run_config
from cscfuse.errors import ShapeError
from cscfuse.imaging import kernels
from cscfuse.pipelines import synth_exposure_stack
from cscfuse.pipelines.mef import y_stack
from cscfuse.tensor.core import Tensor, precision
from cscfuse.training.losses import (
    MefssimConfig,
    SsimConfig,
    halo_loss,
    ivf_loss,
    lambda_mef_schedule,
    mef_loss,
    mefssim,
    mefssim_value,
    mse,
    ssim,
    ssim_value,
)


def _ssim_loop(x, y, cfg):
    size = cfg.window
    g = kernels.gaussian_taps(size, cfg.sigma)
    window = np.outer(g, g)
    values = []
    for i in range(x.shape[0] - size + 1):
        for j in range(x.shape[1] - size + 1):
            px, py = x[i:i + size, j:j + size], y[i:i + size, j:j + size]
            mx, my = np.sum(window * px), np.sum(window * py)
            vx = np.sum(window * px * px) - mx * mx
            vy = np.sum(window * py * py) - my * my
            cov = np.sum(window * px * py) - mx * my
            values.append(((2 * mx * my + cfg.c1) * (2 * cov + cfg.c2))
                          / ((mx * mx + my * my + cfg.c1) * (vx + vy + cfg.c2)))
    return float(np.mean(values))


def _mefssim_loop(sources, fused, cfg):
    win = cfg.window
    n_windows = 0
    total = 0.0
    for i in range(fused.shape[0] - win + 1):
        for j in range(fused.shape[1] - win + 1):
            patches = [s[i:i + win, j:j + win] for s in sources]
            means = [p.mean() for p in patches]
            centered = [p - m for p, m in zip(patches, means)]
            c_hat = max(np.sqrt(np.sum(c * c)) for c in centered)
            structure = sum(centered)
            norm = np.sqrt(np.sum(structure * structure))
            desired = c_hat * structure / norm if norm > 0 else np.zeros_like(structure)
            weights = [np.exp(-((m - 0.5) ** 2) / (2 * cfg.sigma_l ** 2)) for m in means]
            l_hat = sum(w * m for w, m in zip(weights, means)) / sum(weights)

            f = fused[i:i + win, j:j + win]
            mu_f = f.mean()
            cf = f - mu_f
            count = win * win
            luminance = (2 * mu_f * l_hat + cfg.c) / (mu_f ** 2 + l_hat ** 2 + cfg.c)
            if c_hat <= 1e-12:
                score = luminance
            else:
                cs = (2 * np.sum(cf * desired) / count + cfg.c) / (
                    np.sum(cf * cf) / count + np.sum(desired * desired) / count + cfg.c)
                score = luminance * cs
            total += score
            n_windows += 1
    return total / n_windows


def test_mse_is_sum_of_squares():
    """Test the unnormalized squared error."""
    x = np.zeros((1, 1, 2, 2))
    y = np.full((1, 1, 2, 2), 0.5)
    assert float(mse(x, y).data) == pytest.approx(1.0)


def test_mse_shape_mismatch():
    """Test that differently shaped inputs raise ShapeError."""
    with pytest.raises(ShapeError):
        mse(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_matches_scalar_loop(rng):
    """Test SSIM against a window-by-window evaluation."""
    cfg = SsimConfig(window=5)
    x = rng.uniform(size=(9, 10))
    y = np.clip(x + 0.1 * rng.standard_normal((9, 10)), 0, 1)
    assert ssim_value(x, y, cfg) == pytest.approx(_ssim_loop(x, y, cfg), rel=1e-10)


def test_ssim_of_identical_images_is_one(rng):
    """Test that SSIM(x, x) = 1."""
    x = rng.uniform(size=(16, 16))
    assert ssim_value(x, x) == pytest.approx(1.0, abs=1e-12)


def test_ssim_window_shrinks_for_small_images():
    """Test that the window falls back to the largest odd size that fits."""
    assert SsimConfig().window_for(6, 8) == 5
    assert SsimConfig().window_for(32, 32) == 11


def test_ivf_loss_zero_for_perfect_reconstruction(rng):
    """Test that a perfect reconstruction has zero loss."""
    with precision(np.float64):
        x = Tensor(rng.uniform(size=(2, 1, 16, 16)))
        assert float(ivf_loss(x, x, 5.0).data) == pytest.approx(0.0, abs=1e-12)


def test_ivf_loss_normalization(rng):
    """Test the 1/hw normalization and batch averaging of the composite loss."""
    with precision(np.float64):
        x = Tensor(rng.uniform(size=(2, 1, 12, 12)))
        y = Tensor(rng.uniform(size=(2, 1, 12, 12)))
        expected = float(mse(x, y).data) / (2 * 144) + 3.0 / (2 * 144) * (1 - float(ssim(x, y).data))
        assert float(ivf_loss(x, y, 3.0).data) == pytest.approx(expected, rel=1e-12)


def test_halo_loss_of_constant_is_zero():
    """Test that a flat image has no gradient energy."""
    assert float(halo_loss(np.full((1, 1, 8, 8), 0.3)).data) == pytest.approx(0.0, abs=1e-6)


def test_halo_loss_of_ramp():
    """Test the Sobel l1 energy of a horizontal ramp away from the borders."""
    ramp = np.tile(np.arange(6.0), (6, 1))
    with precision(np.float64):
        value = float(halo_loss(ramp).data)
    # interior columns respond with 8 per pixel, replicated border columns with 4
    assert value == pytest.approx(6 * (4 * 8 + 2 * 4))


def test_halo_loss_needs_single_channel():
    """Test that multi-channel inputs are rejected."""
    with pytest.raises(ShapeError):
        halo_loss(np.zeros((1, 3, 8, 8)))


def test_mefssim_matches_scalar_loop(rng):
    """Test MEF-SSIM against a window-by-window evaluation."""
    cfg = MefssimConfig(window=4)
    sources = np.stack([np.clip(rng.uniform(size=(9, 8)) * g, 0, 1) for g in (0.4, 1.0, 1.8)])
    fused = rng.uniform(size=(9, 8))
    assert mefssim_value(sources, fused, cfg) == pytest.approx(_mefssim_loop(sources, fused, cfg), rel=1e-10)


def test_mefssim_flat_windows_score_luminance_only():
    """Test that zero-contrast windows are handled without division by zero."""
    cfg = MefssimConfig(window=4)
    sources = np.stack([np.full((8, 8), 0.2), np.full((8, 8), 0.7)])
    fused = np.full((8, 8), 0.45)
    value = mefssim_value(sources, fused, cfg)
    assert np.isfinite(value)
    assert value == pytest.approx(_mefssim_loop(sources, fused, cfg), rel=1e-10)


def test_mefssim_flat_scene_closed_form():
    """Test a flat scene against its closed form with the single constant C = 0.03 ** 2."""
    cfg = MefssimConfig(window=4)
    assert cfg.c == pytest.approx(9e-4)
    sources = np.stack([np.full((8, 8), 0.2), np.full((8, 8), 0.7)])
    weights = np.exp(-(np.array([0.2, 0.7]) - 0.5) ** 2 / (2 * 0.2 ** 2))
    l_hat = float(np.dot(weights, [0.2, 0.7]) / weights.sum())
    expected = (2 * 0.45 * l_hat + 9e-4) / (0.45 ** 2 + l_hat ** 2 + 9e-4)
    assert mefssim_value(sources, np.full((8, 8), 0.45), cfg) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(0.98806, abs=1e-4)


def test_mefssim_single_exposure_is_one(rng):
    """Test that fusing a single exposure into itself scores 1."""
    y = rng.uniform(size=(12, 12))
    assert mefssim_value(y[None], y) == pytest.approx(1.0, abs=1e-9)


def test_mefssim_shape_checks(rng):
    """Test fused/source mismatches and oversized windows."""
    with pytest.raises(ShapeError):
        mefssim(rng.uniform(size=(3, 8, 8)), rng.uniform(size=(8, 9)))
    with pytest.raises(ShapeError):
        mefssim(rng.uniform(size=(3, 6, 6)), rng.uniform(size=(6, 6)))
    with pytest.raises(ValueError):
        MefssimConfig(window=1)


def test_mef_loss_combines_terms(rng):
    """Test mef_loss = (-mefssim + lambda * halo / n) / hw."""
    with precision(np.float64):
        sources = rng.uniform(size=(2, 3, 10, 10))
        fused = Tensor(rng.uniform(size=(2, 1, 10, 10)))
        score = float(mefssim(sources, fused).data)
        halo = float(halo_loss(fused).data)
        assert float(mef_loss(sources, fused, 0.0).data) == pytest.approx(-score / 100)
        assert float(mef_loss(sources, fused, 2.0).data) == pytest.approx((-score + halo) / 100)


def test_desk_config_halo_weight_keeps_mefssim_dominant():
    """Test that the bundled MEF config weights the halo term well below MEF-SSIM."""
    cfg = load_run_config("mef", Path(__file__).parent.parent / "configs" / "tiny_mef.json")
    ys = y_stack(synth_exposure_stack(0, 3, 64))
    fused = ys.mean(axis=0)
    halo = cfg.train.lambda_mef_max * float(halo_loss(fused).data)
    assert 0 < halo < 0.1 * mefssim_value(ys, fused)


def test_lambda_mef_schedule():
    """Test the linear ramp and its cap."""
    assert lambda_mef_schedule(1) == 0.0
    assert lambda_mef_schedule(5) == pytest.approx(1.0)
    assert lambda_mef_schedule(1000, lambda_max=10.0) == 10.0
    with pytest.raises(ValueError):
        lambda_mef_schedule(0)
