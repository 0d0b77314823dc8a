"""Losses, optimizers and schedules for the fusion networks."""

from cscfuse.training.losses import (
    MefssimConfig,
    SsimConfig,
    halo_loss,
    ivf_loss,
    lambda_mef_schedule,
    mef_loss,
    mefssim,
    mse,
    ssim,
)
from cscfuse.training.optim import Adam, Sgd, build_optimizer
from cscfuse.training.schedules import StepSchedule

__all__ = [
    "Adam", "MefssimConfig", "Sgd", "SsimConfig", "StepSchedule", "build_optimizer", "halo_loss",
    "ivf_loss", "lambda_mef_schedule", "mef_loss", "mefssim", "mse", "ssim",
]
