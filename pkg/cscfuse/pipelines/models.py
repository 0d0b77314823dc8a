"""The three fusion networks built from DCU stacks."""

from typing import List, Tuple

import numpy as np

from cscfuse.config import ModelConfig
from cscfuse.csc.dcu import DcuStack
from cscfuse.csc.modules import Module, _join, filter_parameters, init_filter
from cscfuse.errors import ConfigError, ShapeError
from cscfuse.imaging import differentiable
from cscfuse.tensor import ops
from cscfuse.tensor.core import Tensor

MODEL_KINDS = ("ivf", "mef", "mmf")


def _stack(cfg: ModelConfig, channels: int, activation: str, rng: np.random.Generator) -> DcuStack:
    return DcuStack.create(cfg.units, channels, cfg.code_channels, cfg.kernel_size, activation, rng,
                           momentum=cfg.bn_momentum, eps=cfg.bn_eps)


class FusionModel(Module):
    """Common base: a kind tag checked against checkpoints, plus the config it was built from."""

    kind = ""

    def __init__(self, cfg: ModelConfig):
        self.config = cfg

    def _encoders(self) -> List[Tuple[str, DcuStack]]:
        return []

    def _filters(self) -> List[Tuple[str, ops.ConvFilter]]:
        return []

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        params: List[Tuple[str, Tensor]] = []
        for name, stack in self._encoders():
            params.extend(stack.named_parameters(_join(prefix, name)))
        for name, f in self._filters():
            params.extend(filter_parameters(f, _join(prefix, name)))
        return params

    def named_buffers(self, prefix: str = "") -> List[Tuple[str, np.ndarray]]:
        buffers: List[Tuple[str, np.ndarray]] = []
        for name, stack in self._encoders():
            buffers.extend(stack.named_buffers(_join(prefix, name)))
        return buffers


class IvfnModel(FusionModel):
    """
    Two-branch autoencoder for infrared/visible fusion.

    The input is split into a box-blurred base and its residual detail; each
    goes through its own encoder, and the decoded branches are summed and
    squashed with a sigmoid.
    """

    kind = "ivf"

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__(cfg)
        c, q, s = cfg.in_channels, cfg.code_channels, cfg.kernel_size
        self.base_encoder = _stack(cfg, c, cfg.base_activation, rng)
        self.detail_encoder = _stack(cfg, c, cfg.detail_activation, rng)
        self.base_decoder = init_filter(c, q, s, rng)
        self.detail_decoder = init_filter(c, q, s, rng)

    def _encoders(self):
        return [("base_encoder", self.base_encoder), ("detail_encoder", self.detail_encoder)]

    def _filters(self):
        return [("base_decoder", self.base_decoder), ("detail_decoder", self.detail_decoder)]

    def split(self, x: Tensor) -> Tuple[Tensor, Tensor]:
        base = differentiable.box_mean(x, self.config.base_radius)
        return base, x - base

    def encode(self, x: Tensor, training: bool) -> Tuple[Tensor, Tensor]:
        if x.ndim != 4 or x.shape[1] != self.config.in_channels:
            raise ShapeError(f"IVF model expects (n, {self.config.in_channels}, h, w) input, got {x.shape}")
        base, detail = self.split(x)
        return self.base_encoder.forward(base, training), self.detail_encoder.forward(detail, training)

    def decode(self, z_base: Tensor, z_detail: Tensor) -> Tensor:
        return ops.sigmoid(ops.conv2d(z_base, self.base_decoder) + ops.conv2d(z_detail, self.detail_decoder))

    def reconstruct(self, x: Tensor, training: bool) -> Tensor:
        z_base, z_detail = self.encode(x, training)
        return self.decode(z_base, z_detail)


class MefnModel(FusionModel):
    """Shared encoder plus a 1x1 head giving one weight logit per exposure."""

    kind = "mef"

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__(cfg)
        self.encoder = _stack(cfg, 1, cfg.activation, rng)
        self.head = init_filter(1, cfg.code_channels, 1, rng)

    def _encoders(self):
        return [("encoder", self.encoder)]

    def _filters(self):
        return [("head", self.head)]

    def logits(self, y: Tensor, training: bool) -> Tensor:
        """(m, 1, h, w) Y planes -> (m, 1, h, w) logits."""
        return ops.conv2d(self.encoder.forward(y, training), self.head)

    def weights(self, ys: Tensor, training: bool) -> Tensor:
        """
        Per-pixel exposure weights.

        Args:
            ys: (B, K, h, w) Y channels of B stacks of K exposures

        Returns:
            (B, K, h, w) weights, softmax across the K exposures
        """
        if ys.ndim != 4:
            raise ShapeError(f"MEF model expects (B, K, h, w) stacks, got {ys.shape}")
        b, k, h, w = ys.shape
        logits = self.logits(ops.reshape(ys, (b * k, 1, h, w)), training)
        return ops.softmax(ops.reshape(logits, (b, k, h, w)), axis=1)

    def fuse_y(self, ys: Tensor, training: bool) -> Tuple[Tensor, Tensor]:
        """Return (fused Y (B, 1, h, w), weights (B, K, h, w))."""
        w = self.weights(ys, training)
        return ops.sum(w * ys, axis=1, keepdims=True), w


class MmfnModel(FusionModel):
    """Guided super-resolution: LR codes are upsampled and refined by guide codes, then decoded."""

    kind = "mmf"

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        super().__init__(cfg)
        self.lr_encoder = _stack(cfg, cfg.in_channels, cfg.activation, rng)
        self.guide_encoder = _stack(cfg, cfg.guide_channels, cfg.activation, rng)
        self.recon = init_filter(cfg.in_channels, cfg.code_channels, cfg.kernel_size, rng)

    @property
    def scale(self) -> int:
        return self.config.scale

    def _encoders(self):
        return [("lr_encoder", self.lr_encoder), ("guide_encoder", self.guide_encoder)]

    def _filters(self):
        return [("recon", self.recon)]

    def check_shapes(self, lr_shape, guide_shape) -> None:
        if len(lr_shape) != 4 or len(guide_shape) != 4:
            raise ShapeError(f"MMF inputs must be 4-D; lr {tuple(lr_shape)}, guide {tuple(guide_shape)}")
        if lr_shape[1] != self.config.in_channels or guide_shape[1] != self.config.guide_channels:
            raise ShapeError(
                f"MMF model expects {self.config.in_channels} lr bands and {self.config.guide_channels} guide "
                f"channels; got lr {tuple(lr_shape)}, guide {tuple(guide_shape)}"
            )
        expected = (lr_shape[2] * self.scale, lr_shape[3] * self.scale)
        if lr_shape[0] != guide_shape[0] or tuple(guide_shape[2:]) != expected:
            raise ShapeError(
                f"Guide must be lr size x {self.scale}: lr {tuple(lr_shape)}, guide {tuple(guide_shape)}"
            )

    def forward(self, lr: Tensor, guide: Tensor, training: bool) -> Tensor:
        self.check_shapes(lr.shape, guide.shape)
        cfg = self.config
        z_lr = self.lr_encoder.forward(lr, training)
        z_guide = self.guide_encoder.forward(guide, training)
        up = differentiable.upsample(z_lr, self.scale, mode="bicubic")
        refined = differentiable.fast_guided_filter(up, z_guide, cfg.fgf_radius, cfg.fgf_eps, cfg.fgf_subsample)
        return ops.conv2d(refined, self.recon)


def build_model(kind: str, cfg: ModelConfig, seed: int = 0) -> FusionModel:
    """Fresh model of the given kind with parameters drawn from a generator seeded by `seed`."""
    rng = np.random.default_rng(seed)
    if kind == "ivf":
        return IvfnModel(cfg, rng)
    if kind == "mef":
        return MefnModel(cfg, rng)
    if kind == "mmf":
        return MmfnModel(cfg, rng)
    raise ConfigError(f"Unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
