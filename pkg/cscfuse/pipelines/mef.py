"""Multi-exposure fusion: per-pixel softmax weights over the exposures' Y channels."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from cscfuse.config import FusionConfig, RunConfig
from cscfuse.errors import ConfigError, DataError, ShapeError
from cscfuse.fusion.strategies import fuse_chroma_l1
from cscfuse.imaging.color import rgb_to_ycbcr_array, ycbcr_to_rgb_array
from cscfuse.imaging.filters import percentile_stretch
from cscfuse.imaging.planes import ColorSpace, ImagePlane, ImageStack
from cscfuse.pipelines.checkpoint import Checkpoint, resolve_model
from cscfuse.pipelines.models import MefnModel, build_model
from cscfuse.pipelines.trainer import TrainingData, TrainingLog, Trainer, crop_box, crop_side
from cscfuse.tensor.core import Tensor, no_grad
from cscfuse.training.losses import lambda_mef_schedule, mef_loss

logger = logging.getLogger(__name__)

StackInput = Union[ImageStack, np.ndarray]


def _ycbcr_stack(stack: ImageStack) -> np.ndarray:
    """(K, 3, h, w) YCbCr, or (K, 1, h, w) for gray stacks."""
    arr = stack.array()
    if stack.colorspace is ColorSpace.RGB:
        return np.stack([rgb_to_ycbcr_array(p) for p in arr])
    return arr


def y_stack(stack: StackInput) -> np.ndarray:
    """(K, h, w) Y channels of an exposure stack."""
    if isinstance(stack, ImageStack):
        return _ycbcr_stack(stack)[:, 0]
    arr = np.asarray(stack, dtype=np.float64)
    if arr.ndim != 3:
        raise ShapeError(f"Exposure Y stacks must be (K, h, w), got shape {arr.shape}")
    return arr


class MefData(TrainingData):
    def __init__(self, stacks: Sequence[StackInput]):
        self.items = [y_stack(s) for s in stacks]
        if not self.items:
            raise DataError("MEF training needs at least one exposure stack")
        counts = sorted({item.shape[0] for item in self.items})
        if len(counts) != 1:
            raise DataError(f"All training stacks must have the same number of exposures, got {counts}")

    def __len__(self) -> int:
        return len(self.items)

    def batch(self, indices, rng, crop, flip):
        chosen = [self.items[i] for i in indices]
        side = crop_side([item.shape[1:] for item in chosen], crop)
        crops = []
        for item in chosen:
            top, left = crop_box(rng, item.shape[1], item.shape[2], side)
            patch = item[:, top:top + side, left:left + side]
            if flip and rng.random() < 0.5:
                patch = patch[..., ::-1]
            crops.append(patch)
        return Tensor(np.stack(crops))

    def full(self, index):
        return Tensor(self.items[index][None])


def _loss_for(lambda_max: float):
    def mef_step_loss(model: MefnModel, ys: Tensor, training: bool, iteration: int):
        lam = lambda_mef_schedule(iteration, lambda_max)
        fused, _ = model.fuse_y(ys, training)
        return mef_loss(ys.data, fused, lam), {"lambda_mef": lam}
    return mef_step_loss


def mefn_train(dataset: Sequence[StackInput], cfg: RunConfig, log: Optional[TrainingLog] = None) -> Checkpoint:
    """
    Train the weight network on exposure stacks.

    The loss sees the fused Y before any percentile stretch; the halo weight
    follows lambda_mef_schedule over the global iteration count.
    """
    if cfg.task != "mef":
        raise ConfigError(f"mefn_train needs an 'mef' configuration, got {cfg.task!r}")
    model = build_model("mef", cfg.model, cfg.train.seed)
    return Trainer(model, cfg, MefData(dataset), _loss_for(cfg.train.lambda_mef_max)).fit(log)


@dataclass
class MefFusion:
    """Fused image plus the intermediate weight maps and the unstretched Y."""

    fused: ImagePlane
    weights: np.ndarray
    fused_y: np.ndarray


def fuse_y_channels(source: Union[Checkpoint, MefnModel], ys: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Return (fused Y (h, w), weights (K, h, w)) in eval mode."""
    model = resolve_model(source, "mef")
    with no_grad():
        fused, weights = model.fuse_y(Tensor(np.asarray(ys)[None]), training=False)
    return fused.data[0, 0].astype(np.float64), weights.data[0].astype(np.float64)


def mefn_fuse_detailed(source: Union[Checkpoint, MefnModel], stack: ImageStack,
                       fusion: Optional[FusionConfig] = None) -> MefFusion:
    if len(stack) < 2:
        raise ConfigError(f"MEF fusion needs at least two exposures, got {len(stack)}")
    fusion = fusion or FusionConfig()
    model = resolve_model(source, "mef")
    ycc = _ycbcr_stack(stack)
    fused_y, weights = fuse_y_channels(model, ycc[:, 0])

    if stack.colorspace is ColorSpace.GRAY:
        merged = ImagePlane.clipped(fused_y, ColorSpace.GRAY)
    else:
        chroma = [fuse_chroma_l1(ycc[:, c]) for c in (1, 2)]
        planes = np.stack([fused_y] + chroma)
        if stack.colorspace is ColorSpace.RGB:
            merged = ImagePlane.clipped(ycbcr_to_rgb_array(planes), ColorSpace.RGB)
        else:
            merged = ImagePlane.clipped(planes, ColorSpace.YCBCR)
    fused = percentile_stretch(merged, fusion.stretch_lo, fusion.stretch_hi)
    logger.debug(f"Fused {len(stack)} exposures of size {stack.shape}")
    return MefFusion(fused=fused, weights=weights, fused_y=fused_y)


def mefn_fuse(source: Union[Checkpoint, MefnModel], stack: ImageStack,
              fusion: Optional[FusionConfig] = None) -> ImagePlane:
    """
    Fuse K >= 2 co-registered exposures.

    Y is the weighted sum of the source Y channels, Cb/Cr come from
    fuse_chroma_l1, and the result is percentile-stretched.
    """
    return mefn_fuse_detailed(source, stack, fusion).fused
