"""Infrared/visible fusion: autoencoder training and feature-level fusion."""

import logging
from typing import Optional, Sequence, Union

import numpy as np

from cscfuse.config import FusionConfig, RunConfig
from cscfuse.errors import ConfigError, DataError, ShapeError
from cscfuse.fusion.strategies import get_strategy
from cscfuse.imaging.color import luma
from cscfuse.imaging.planes import ImagePlane
from cscfuse.pipelines.checkpoint import Checkpoint, resolve_model
from cscfuse.pipelines.models import IvfnModel, build_model
from cscfuse.pipelines.trainer import TrainingData, TrainingLog, Trainer, crop_box, crop_side
from cscfuse.tensor.core import Tensor, no_grad
from cscfuse.training.losses import ivf_loss

logger = logging.getLogger(__name__)

ImageInput = Union[ImagePlane, np.ndarray]


def gray_plane(img: ImageInput) -> np.ndarray:
    """(h, w) float64 plane; color images contribute their luma."""
    if isinstance(img, ImagePlane):
        return luma(img)
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[0] == 1:
        arr = arr[0]
    if arr.ndim != 2:
        raise ShapeError(f"IVF works on single-channel planes, got shape {arr.shape}")
    return arr


def _batch_of_one(plane: np.ndarray) -> Tensor:
    return Tensor(plane[None, None])


class IvfData(TrainingData):
    def __init__(self, images: Sequence[ImageInput]):
        self.items = [gray_plane(img) for img in images]
        if not self.items:
            raise DataError("IVF training needs at least one image")

    def __len__(self) -> int:
        return len(self.items)

    def batch(self, indices, rng, crop, flip):
        chosen = [self.items[i] for i in indices]
        side = crop_side([img.shape for img in chosen], crop)
        patches = []
        for img in chosen:
            top, left = crop_box(rng, img.shape[0], img.shape[1], side)
            patch = img[top:top + side, left:left + side]
            if flip and rng.random() < 0.5:
                patch = patch[:, ::-1]
            patches.append(patch[None])
        return Tensor(np.stack(patches))

    def full(self, index):
        return _batch_of_one(self.items[index])


def _loss_for(lambda_ivf: float):
    def ivf_step_loss(model: IvfnModel, x: Tensor, training: bool, iteration: int):
        return ivf_loss(x, model.reconstruct(x, training), lambda_ivf), {}
    return ivf_step_loss


def ivfn_train(dataset: Sequence[ImageInput], cfg: RunConfig, log: Optional[TrainingLog] = None) -> Checkpoint:
    """
    Train the two-branch autoencoder on single-channel images.

    Infrared and visible images are mixed freely; each is reconstructed from
    its own base/detail codes.
    """
    if cfg.task != "ivf":
        raise ConfigError(f"ivfn_train needs an 'ivf' configuration, got {cfg.task!r}")
    if cfg.model.in_channels != 1:
        raise ConfigError(f"IVF models are single-channel; model.in_channels is {cfg.model.in_channels}")
    model = build_model("ivf", cfg.model, cfg.train.seed)
    return Trainer(model, cfg, IvfData(dataset), _loss_for(cfg.train.lambda_ivf)).fit(log)


def ivfn_reconstruct(source: Union[Checkpoint, IvfnModel], image: ImageInput) -> np.ndarray:
    """Plain autoencoder output for one image, in eval mode."""
    model = resolve_model(source, "ivf")
    with no_grad():
        out = model.reconstruct(_batch_of_one(gray_plane(image)), training=False)
    return out.data[0, 0].astype(np.float64)


def ivfn_fuse(source: Union[Checkpoint, IvfnModel], infrared: ImageInput, visible: ImageInput,
              strategy_base: Optional[str] = None, strategy_detail: Optional[str] = None,
              fusion: Optional[FusionConfig] = None) -> np.ndarray:
    """
    Fuse a co-registered infrared/visible pair in feature space.

    Both images are encoded into base and detail codes; base codes are merged
    with `strategy_base`, detail codes with `strategy_detail`, and the merged
    codes are decoded. Strategies default to the fusion config (saliency for
    base, l1 for detail).

    Returns:
        (h, w) fused plane in [0, 1]
    """
    fusion = fusion or FusionConfig()
    strategy_base = strategy_base or fusion.base_strategy
    strategy_detail = strategy_detail or fusion.detail_strategy
    model = resolve_model(source, "ivf")
    ir, vis = gray_plane(infrared), gray_plane(visible)
    if ir.shape != vis.shape:
        raise ShapeError(f"Infrared {ir.shape} and visible {vis.shape} images are not co-registered")

    fuse_base = get_strategy(strategy_base, fusion.saliency_radius, fusion.saliency_eps)
    fuse_detail = get_strategy(strategy_detail, fusion.saliency_radius, fusion.saliency_eps)
    with no_grad():
        zb_ir, zd_ir = model.encode(_batch_of_one(ir), training=False)
        zb_vis, zd_vis = model.encode(_batch_of_one(vis), training=False)
        base, _ = fuse_base(zb_ir.data[0], zb_vis.data[0])
        detail, _ = fuse_detail(zd_ir.data[0], zd_vis.data[0])
        dtype = zb_ir.dtype
        out = model.decode(Tensor(base[None], dtype=dtype), Tensor(detail[None], dtype=dtype))
    logger.debug(f"Fused IVF pair of size {ir.shape} with base={strategy_base}, detail={strategy_detail}")
    return out.data[0, 0].astype(np.float64)
