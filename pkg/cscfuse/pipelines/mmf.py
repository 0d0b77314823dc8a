"""Guided multi-modal super-resolution: training, fusion and the Wald degradation."""

import logging
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from cscfuse.config import RunConfig
from cscfuse.errors import ConfigError, DataError, ShapeError
from cscfuse.imaging import kernels
from cscfuse.imaging.planes import ImagePlane
from cscfuse.pipelines.checkpoint import Checkpoint, resolve_model
from cscfuse.pipelines.models import MmfnModel, build_model
from cscfuse.pipelines.trainer import TrainingData, TrainingLog, Trainer, crop_box, crop_side
from cscfuse.tensor.core import Tensor, no_grad
from cscfuse.training.losses import mse

logger = logging.getLogger(__name__)

Triple = Tuple[np.ndarray, np.ndarray, np.ndarray]


def _cube(x: Union[np.ndarray, ImagePlane], what: str) -> np.ndarray:
    arr = x.pixels if isinstance(x, ImagePlane) else np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ShapeError(f"{what} must be (channels, h, w), got shape {arr.shape}")
    return arr


def wald_protocol(hr_cube: np.ndarray, guide: np.ndarray, scale: int) -> Triple:
    """
    Simulate the low-resolution input from a high-resolution reference.

    Each band is blurred with a Gaussian of sigma = scale / 2 (replicate
    borders) and decimated by `scale`, keeping the sample at offset scale // 2
    of every block. The guide is returned at full resolution.

    Returns:
        (lr_cube, guide, hr_cube)
    """
    if scale < 2:
        raise ConfigError(f"The Wald protocol needs scale >= 2, got {scale}")
    hr = _cube(hr_cube, "HR reference")
    guide = _cube(guide, "Guide")
    h, w = hr.shape[1:]
    if h % scale or w % scale:
        raise ShapeError(f"HR size {h}x{w} is not a multiple of scale {scale}")
    if guide.shape[1:] != hr.shape[1:]:
        raise ShapeError(f"Guide {guide.shape} and HR reference {hr.shape} differ in size")
    offset = scale // 2
    blurred = np.stack([ndimage.gaussian_filter(band, scale / 2.0, mode="nearest") for band in hr])
    lr = blurred[:, offset::scale, offset::scale]
    return np.ascontiguousarray(lr), guide, hr


def bicubic_baseline(lr: np.ndarray, scale: int) -> np.ndarray:
    """Band-wise bicubic upsampling: the reference point the trained network should beat."""
    lr = _cube(lr, "LR input")
    h, w = lr.shape[1:]
    return kernels.apply(lr, kernels.interp_matrix(h, h * scale, "bicubic"),
                         kernels.interp_matrix(w, w * scale, "bicubic"))


class MmfData(TrainingData):
    """(lr, guide, reference) triples; crops stay aligned on the scale grid."""

    def __init__(self, triples: Sequence[Triple], scale: int):
        self.scale = scale
        self.items = []
        for i, (lr, guide, hr) in enumerate(triples):
            lr, guide, hr = _cube(lr, "LR input"), _cube(guide, "Guide"), _cube(hr, "HR reference")
            expected = (lr.shape[1] * scale, lr.shape[2] * scale)
            if guide.shape[1:] != expected or hr.shape[1:] != expected or hr.shape[0] != lr.shape[0]:
                raise ShapeError(
                    f"Item {i}: lr {lr.shape}, guide {guide.shape}, reference {hr.shape} do not agree at scale {scale}"
                )
            self.items.append((lr, guide, hr))
        if not self.items:
            raise DataError("MMF training needs at least one (lr, guide, reference) triple")

    def __len__(self) -> int:
        return len(self.items)

    def batch(self, indices, rng, crop, flip):
        chosen = [self.items[i] for i in indices]
        side = crop_side([hr.shape[1:] for _, _, hr in chosen], crop, multiple=self.scale)
        low = side // self.scale
        lrs, guides, hrs = [], [], []
        for lr, guide, hr in chosen:
            top, left = crop_box(rng, lr.shape[1], lr.shape[2], low)
            ht, hl = top * self.scale, left * self.scale
            parts = [lr[:, top:top + low, left:left + low],
                     guide[:, ht:ht + side, hl:hl + side],
                     hr[:, ht:ht + side, hl:hl + side]]
            if flip and rng.random() < 0.5:
                parts = [p[..., ::-1] for p in parts]
            lrs.append(parts[0])
            guides.append(parts[1])
            hrs.append(parts[2])
        return Tensor(np.stack(lrs)), Tensor(np.stack(guides)), Tensor(np.stack(hrs))

    def full(self, index):
        lr, guide, hr = self.items[index]
        return Tensor(lr[None]), Tensor(guide[None]), Tensor(hr[None])


def mmf_loss(model: MmfnModel, batch, training: bool, iteration: int):
    lr, guide, hr = batch
    out = model.forward(lr, guide, training)
    return mse(out, hr) / float(out.data.size), {}


def mmfn_train(dataset: Sequence[Triple], cfg: RunConfig, log: Optional[TrainingLog] = None) -> Checkpoint:
    """Supervised training against the HR reference with mean squared error."""
    if cfg.task != "mmf":
        raise ConfigError(f"mmfn_train needs an 'mmf' configuration, got {cfg.task!r}")
    model = build_model("mmf", cfg.model, cfg.train.seed)
    return Trainer(model, cfg, MmfData(dataset, cfg.model.scale), mmf_loss).fit(log)


def mmfn_fuse(source: Union[Checkpoint, MmfnModel], lr_image, guide_image) -> np.ndarray:
    """
    Super-resolve `lr_image` (bands, h, w) under `guide_image` (g, h*scale, w*scale).

    Returns:
        (bands, h*scale, w*scale) float64 array, not clipped
    """
    model = resolve_model(source, "mmf")
    lr = _cube(lr_image, "LR input")
    guide = _cube(guide_image, "Guide")
    model.check_shapes((1,) + lr.shape, (1,) + guide.shape)
    with no_grad():
        out = model.forward(Tensor(lr[None]), Tensor(guide[None]), training=False)
    return out.data[0].astype(np.float64)
