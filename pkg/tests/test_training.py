"""Tests for the training loop, schedules and optimizers."""

import json

import numpy as np
import pytest

from cscfuse.config import build_run_config
from cscfuse.errors import ConfigError, DataError, DivergenceError
from cscfuse.pipelines import Checkpoint, build_model, ivfn_train, mefn_train, mmfn_train
from cscfuse.pipelines.datasets import synthetic_dataset
from cscfuse.pipelines.ivf import IvfData
from cscfuse.pipelines.mef import MefData
from cscfuse.pipelines.trainer import Trainer, TrainingLog, crop_side
from cscfuse.tensor import ops
from cscfuse.tensor.core import Tensor
from cscfuse.training.losses import mse
from cscfuse.training.optim import Adam, Sgd
from cscfuse.training.schedules import StepSchedule


def _ivf_config(**train):
    values = {"epochs": 2, "batch_size": 2, "crop_size": 16, "lr": 1e-3, "lr_milestones": []}
    values.update(train)
    return build_run_config("ivf", {"model": {"units": 2, "code_channels": 4, "base_radius": 3}, "train": values})


def _ivf_images(cfg, pairs=1):
    return synthetic_dataset(cfg, pairs, seed=0, size=24)


def test_step_schedule():
    """Test that the rate drops once per passed milestone."""
    schedule = StepSchedule(1e-2, [2, 4], 0.1)
    assert [schedule.lr_at(e) for e in (1, 2, 3, 4, 5)] == pytest.approx([1e-2, 1e-2, 1e-3, 1e-3, 1e-4])


def test_sgd_step():
    """Test a plain gradient step."""
    p = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    Sgd([p], 0.5).step({p: np.array([2.0, -2.0])})
    np.testing.assert_allclose(p.data, [0.0, 3.0])


def test_adam_first_step_moves_by_lr():
    """Test that the first bias-corrected Adam step has magnitude lr."""
    p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    Adam([p], 0.1).step({p: np.array([3.0, -0.01])})
    np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-5)


def test_adam_zero_lr_keeps_parameters():
    """Test that a zero learning rate leaves parameters untouched."""
    p = Tensor(np.array([1.0, -1.0]), requires_grad=True)
    Adam([p], 0.0).step({p: np.array([3.0, -0.01])})
    np.testing.assert_array_equal(p.data, [1.0, -1.0])


def test_crop_side():
    """Test crop shrinking and rounding to the scale grid."""
    assert crop_side([(20, 30), (25, 18)], 64) == 18
    assert crop_side([(20, 30)], 16) == 16
    assert crop_side([(21, 21)], 64, multiple=4) == 20
    with pytest.raises(DataError):
        crop_side([(3, 3)], 64, multiple=4)


def test_training_is_deterministic():
    """Test that two runs with the same seed write byte-identical checkpoints."""
    cfg = _ivf_config()
    first = ivfn_train(_ivf_images(cfg), cfg)
    second = ivfn_train(_ivf_images(cfg), cfg)
    assert first.digest == second.digest
    assert first.to_bytes() == second.to_bytes()


def test_training_changes_parameters():
    """Test that a nonzero learning rate moves the weights."""
    cfg = _ivf_config()
    trained = ivfn_train(_ivf_images(cfg), cfg)
    initial = Checkpoint.from_model(build_model("ivf", cfg.model, cfg.train.seed), cfg)
    assert trained.digest != initial.digest


def test_zero_learning_rate_reproduces_initialization():
    """Test that with lr 0 and frozen batch statistics the output equals the seeded initialization."""
    cfg = build_run_config("ivf", {
        "model": {"units": 2, "code_channels": 4, "base_radius": 3, "bn_momentum": 0.0},
        "train": {"epochs": 2, "batch_size": 2, "crop_size": 16, "lr": 0.0, "lr_milestones": []},
    })
    trained = ivfn_train(_ivf_images(cfg), cfg)
    initial = Checkpoint.from_model(build_model("ivf", cfg.model, cfg.train.seed), cfg)
    assert trained.digest == initial.digest


def test_training_log_records_epochs(tmp_dir):
    """Test the per-epoch history and its JSON form."""
    cfg = _ivf_config(epochs=3, lr_milestones=[2])
    log = TrainingLog()
    checkpoint = ivfn_train(_ivf_images(cfg), cfg, log)
    assert [r.epoch for r in log.epochs] == [1, 2, 3]
    assert [r.steps for r in log.epochs] == [1, 1, 1]
    assert [r.lr for r in log.epochs] == pytest.approx([1e-3, 1e-3, 1e-4])
    assert all(np.isfinite(r.loss) for r in log.epochs)
    assert log.digest == checkpoint.digest

    data = json.loads(log.write(tmp_dir / "run" / "log.json").read_text())
    assert data["task"] == "ivf"
    assert data["digest"] == checkpoint.digest
    assert "val_loss" not in data["epochs"][0]
    assert "lambda_mef" not in data["epochs"][0]


def test_validation_holdout():
    """Test that a validation fraction adds a held-out loss per epoch."""
    cfg = _ivf_config(validation_fraction=0.5)
    log = TrainingLog()
    ivfn_train(_ivf_images(cfg, pairs=2), cfg, log)
    assert all(r.val_loss is not None and np.isfinite(r.val_loss) for r in log.epochs)
    assert [r.steps for r in log.epochs] == [1, 1]


def test_validation_needs_training_items(smooth_gray):
    """Test that holding out the only item is a data error."""
    cfg = _ivf_config(validation_fraction=0.5)
    with pytest.raises(DataError):
        ivfn_train([smooth_gray], cfg)


def test_mef_training_logs_halo_weight(tiny_mef_config):
    """Test that the halo weight grows with the iteration count."""
    log = TrainingLog()
    mefn_train(synthetic_dataset(tiny_mef_config, 2, size=24), tiny_mef_config, log)
    assert [r.lambda_mef for r in log.epochs] == pytest.approx([0.0, 0.25])


def test_mef_data_needs_equal_stack_sizes(rng):
    """Test that stacks with different exposure counts are rejected."""
    with pytest.raises(DataError):
        MefData([rng.uniform(size=(3, 16, 16)), rng.uniform(size=(2, 16, 16))])


def test_mmf_training_runs(tiny_mmf_config):
    """Test a short supervised run."""
    log = TrainingLog()
    checkpoint = mmfn_train(synthetic_dataset(tiny_mmf_config, size=16), tiny_mmf_config, log)
    assert checkpoint.kind == "mmf"
    assert len(log.epochs) == 2


def test_train_functions_check_task(tiny_ivf_config, tiny_mef_config, smooth_gray):
    """Test that each trainer refuses another task's configuration."""
    with pytest.raises(ConfigError):
        mefn_train([], tiny_ivf_config)
    with pytest.raises(ConfigError):
        ivfn_train([smooth_gray], tiny_mef_config)
    with pytest.raises(ConfigError):
        mmfn_train([], tiny_ivf_config)


def test_non_finite_loss_returns_last_good_checkpoint(smooth_gray):
    """Test that a NaN loss raises with the parameters from before the last update."""
    cfg = _ivf_config(epochs=3, batch_size=1)

    def loss_fn(model, x, training, iteration):
        out = model.reconstruct(x, training)
        loss = mse(out, x)
        if iteration >= 2:
            loss = loss * float("nan")
        return loss, {}

    model = build_model("ivf", cfg.model, cfg.train.seed)
    initial = Checkpoint.from_model(build_model("ivf", cfg.model, cfg.train.seed), cfg)
    with pytest.raises(DivergenceError) as info:
        Trainer(model, cfg, IvfData([smooth_gray]), loss_fn).fit()
    assert info.value.diagnostics["step"] == 2
    assert np.isnan(info.value.diagnostics["loss"])
    assert info.value.last_good is not None
    assert info.value.last_good.kind == "ivf"
    assert info.value.last_good.digest == initial.digest


def test_non_finite_first_loss_has_no_last_good(smooth_gray):
    """Test that a loss that is NaN from the first step leaves no checkpoint to fall back on."""
    cfg = _ivf_config(epochs=1, batch_size=1)

    def loss_fn(model, x, training, iteration):
        return mse(model.reconstruct(x, training), x) * float("nan"), {}

    model = build_model("ivf", cfg.model, cfg.train.seed)
    with pytest.raises(DivergenceError) as info:
        Trainer(model, cfg, IvfData([smooth_gray]), loss_fn).fit()
    assert info.value.diagnostics["step"] == 1
    assert info.value.last_good is None


def test_non_finite_gradient_returns_pre_update_state(smooth_gray):
    """Test that an infinite gradient stops training before the update."""
    cfg = _ivf_config()

    def loss_fn(model, x, training, iteration):
        w = model.parameters()[0]
        return ops.sum(ops.absolute(w - w.data) ** 0.5), {}

    model = build_model("ivf", cfg.model, cfg.train.seed)
    initial = Checkpoint.from_model(build_model("ivf", cfg.model, cfg.train.seed), cfg)
    with pytest.raises(DivergenceError) as info:
        Trainer(model, cfg, IvfData([smooth_gray]), loss_fn).fit()
    assert info.value.diagnostics["step"] == 1
    assert info.value.last_good.digest == initial.digest
