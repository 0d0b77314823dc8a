"""Dictionary convolutional units: one unrolled ISTA iteration with learnable parts."""

from typing import List, Tuple

import numpy as np

from cscfuse.csc.modules import (
    Activation,
    BatchNorm,
    Module,
    Sst,
    _join,
    filter_parameters,
    init_filter,
    make_activation,
)
from cscfuse.errors import ShapeError
from cscfuse.tensor import ops
from cscfuse.tensor.core import Tensor
from cscfuse.tensor.ops import ConvFilter

MODES = ("train", "eval")


def _is_training(mode: str) -> bool:
    if mode not in MODES:
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return mode == "train"


class Dcu(Module):
    """
    z_next = f(BN(z + Conv1(x - Conv0(z))))

    conv0 decodes codes to the image domain (q -> c), conv1 encodes the
    residual back to codes (c -> q).
    """

    def __init__(self, conv0: ConvFilter, conv1: ConvFilter, bn: BatchNorm, activation: Activation):
        if conv0.q_in != conv1.q_out or conv0.q_out != conv1.q_in:
            raise ShapeError(
                f"conv0 {conv0.weight.shape} and conv1 {conv1.weight.shape} disagree on (c, q)"
            )
        if bn.channels != conv1.q_out:
            raise ShapeError(f"BN has {bn.channels} channels, codes have {conv1.q_out}")
        self.conv0 = conv0
        self.conv1 = conv1
        self.bn = bn
        self.activation = activation

    @property
    def image_channels(self) -> int:
        return self.conv0.q_out

    @property
    def code_channels(self) -> int:
        return self.conv0.q_in

    @classmethod
    def create(cls, c: int, q: int, size: int, activation: str, rng: np.random.Generator,
               momentum: float = 0.1, eps: float = 1e-5) -> "Dcu":
        return cls(
            conv0=init_filter(c, q, size, rng),
            conv1=init_filter(q, c, size, rng),
            bn=BatchNorm(q, momentum=momentum, eps=eps),
            activation=make_activation(activation, q),
        )

    @classmethod
    def from_dictionary(cls, d: ConvFilter, lam: float, rho: float) -> "Dcu":
        """Unit that reproduces one ISTA step: Conv0 = d, Conv1 = d^T / rho, f = SST(lam / rho)."""
        flipped = ops._flip(d.weight.data) / rho
        q = d.q_in
        return cls(
            conv0=ConvFilter(Tensor(d.weight.data.copy(), requires_grad=True)),
            conv1=ConvFilter(Tensor(flipped, requires_grad=True)),
            bn=BatchNorm.identity(q),
            activation=Sst.with_threshold(q, lam / rho),
        )

    def forward(self, x: Tensor, z: Tensor, training: bool) -> Tensor:
        if x.ndim != 4 or z.ndim != 4:
            raise ShapeError(f"DCU expects 4-D image and code tensors, got {x.shape} and {z.shape}")
        if x.shape[1] != self.image_channels or z.shape[1] != self.code_channels:
            raise ShapeError(
                f"DCU with (c={self.image_channels}, q={self.code_channels}) got image {x.shape} and code {z.shape}"
            )
        if x.shape[0] != z.shape[0] or x.shape[2:] != z.shape[2:]:
            raise ShapeError(f"Image {x.shape} and code {z.shape} differ in batch or spatial size")
        residual = x - ops.conv2d(z, self.conv0)
        return self.activation(self.bn(z + ops.conv2d(residual, self.conv1), training))

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        return (
            filter_parameters(self.conv0, _join(prefix, "conv0"))
            + filter_parameters(self.conv1, _join(prefix, "conv1"))
            + self.bn.named_parameters(_join(prefix, "bn"))
            + self.activation.named_parameters(_join(prefix, "act"))
        )

    def named_buffers(self, prefix: str = "") -> List[Tuple[str, np.ndarray]]:
        return self.bn.named_buffers(_join(prefix, "bn"))


class DcuStack(Module):
    """N untied units sharing (c, q); the code starts at zero."""

    def __init__(self, units: List[Dcu]):
        if not units:
            raise ValueError("A DCU stack needs at least one unit")
        c, q = units[0].image_channels, units[0].code_channels
        for i, unit in enumerate(units):
            if (unit.image_channels, unit.code_channels) != (c, q):
                raise ShapeError(
                    f"Unit {i} has (c={unit.image_channels}, q={unit.code_channels}), stack has (c={c}, q={q})"
                )
        self.units = list(units)
        self.image_channels = c
        self.code_channels = q

    @classmethod
    def create(cls, n_units: int, c: int, q: int, size: int, activation: str, rng: np.random.Generator,
               momentum: float = 0.1, eps: float = 1e-5) -> "DcuStack":
        return cls([Dcu.create(c, q, size, activation, rng, momentum, eps) for _ in range(n_units)])

    def forward(self, x: Tensor, training: bool) -> Tensor:
        n, _, h, w = x.shape
        z = Tensor(np.zeros((n, self.code_channels, h, w)), dtype=x.dtype)
        for unit in self.units:
            z = unit.forward(x, z, training)
        return z

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        params: List[Tuple[str, Tensor]] = []
        for i, unit in enumerate(self.units):
            params.extend(unit.named_parameters(_join(prefix, f"units.{i}")))
        return params

    def named_buffers(self, prefix: str = "") -> List[Tuple[str, np.ndarray]]:
        buffers: List[Tuple[str, np.ndarray]] = []
        for i, unit in enumerate(self.units):
            buffers.extend(unit.named_buffers(_join(prefix, f"units.{i}")))
        return buffers


def dcu_forward(unit: Dcu, x: Tensor, z: Tensor, mode: str = "train") -> Tensor:
    return unit.forward(x, z, _is_training(mode))


def dcu_stack_forward(stack: DcuStack, x: Tensor, mode: str = "train") -> Tensor:
    return stack.forward(x, _is_training(mode))
