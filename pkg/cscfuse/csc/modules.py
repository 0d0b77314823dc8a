"""Parameter containers: the module base class, filter banks, batch norm and activations."""

import math
from abc import ABC, abstractmethod
from collections import OrderedDict
from typing import Dict, List, Tuple

import numpy as np

from cscfuse.errors import CheckpointIntegrityError
from cscfuse.tensor import ops
from cscfuse.tensor.core import Tensor, default_dtype
from cscfuse.tensor.ops import ConvFilter


class Module(ABC):
    """Base class for everything that owns learnable parameters."""

    @abstractmethod
    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        """Return (name, tensor) pairs in a fixed order."""
        pass

    def named_buffers(self, prefix: str = "") -> List[Tuple[str, np.ndarray]]:
        """Non-learnable state that still belongs in a checkpoint (running statistics)."""
        return []

    def parameters(self) -> List[Tensor]:
        return [t for _, t in self.named_parameters()]

    def state_arrays(self) -> "OrderedDict[str, np.ndarray]":
        state: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, tensor in self.named_parameters():
            state[name] = tensor.data
        for name, buffer in self.named_buffers():
            state[name] = buffer
        return state

    def load_state_arrays(self, arrays: Dict[str, np.ndarray]) -> None:
        """Copy arrays into parameters and buffers; names and shapes must match exactly."""
        expected = self.state_arrays()
        missing = sorted(set(expected) - set(arrays))
        unexpected = sorted(set(arrays) - set(expected))
        if missing or unexpected:
            raise CheckpointIntegrityError(
                f"Parameter names do not match the model (missing: {missing[:5]}, unexpected: {unexpected[:5]})"
            )
        for name, tensor in self.named_parameters():
            _check_shape(name, arrays[name], tensor.shape)
            tensor.data = np.array(arrays[name], dtype=tensor.dtype)
        for name, buffer in self.named_buffers():
            _check_shape(name, arrays[name], buffer.shape)
            buffer[...] = arrays[name]


def _check_shape(name: str, array: np.ndarray, shape) -> None:
    if tuple(array.shape) != tuple(shape):
        raise CheckpointIntegrityError(f"Shape mismatch for {name}: stored {array.shape}, model {tuple(shape)}")


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name


def init_filter(q_out: int, q_in: int, size: int, rng: np.random.Generator, bias: bool = True) -> ConvFilter:
    """Filter bank with weights (and bias) drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    bound = 1.0 / math.sqrt(q_in * size * size)
    dtype = default_dtype()
    weight = Tensor(rng.uniform(-bound, bound, size=(q_out, q_in, size, size)), requires_grad=True, dtype=dtype)
    b = Tensor(rng.uniform(-bound, bound, size=(q_out,)), requires_grad=True, dtype=dtype) if bias else None
    return ConvFilter(weight, b)


def filter_parameters(f: ConvFilter, prefix: str) -> List[Tuple[str, Tensor]]:
    params = [(_join(prefix, "weight"), f.weight)]
    if f.bias is not None:
        params.append((_join(prefix, "bias"), f.bias))
    return params


class BatchNorm(Module):
    """Per-channel batch normalization state: affine parameters plus running statistics."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        dtype = default_dtype()
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Tensor(np.ones(channels), requires_grad=True, dtype=dtype)
        self.beta = Tensor(np.zeros(channels), requires_grad=True, dtype=dtype)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    @classmethod
    def identity(cls, channels: int, eps: float = 1e-5) -> "BatchNorm":
        """Eval-mode identity: running variance 1 - eps so that sqrt(var + eps) == 1."""
        bn = cls(channels, eps=eps)
        bn.running_var[...] = 1.0 - eps
        return bn

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return ops.batch_norm(x, self.gamma, self.beta, self.running_mean, self.running_var,
                              training=training, momentum=self.momentum, eps=self.eps)

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        return [(_join(prefix, "gamma"), self.gamma), (_join(prefix, "beta"), self.beta)]

    def named_buffers(self, prefix: str = "") -> List[Tuple[str, np.ndarray]]:
        return [(_join(prefix, "running_mean"), self.running_mean),
                (_join(prefix, "running_var"), self.running_var)]


class Activation(Module):
    """Activation f(.) at the end of a dictionary convolutional unit."""

    kind = ""

    @abstractmethod
    def __call__(self, x: Tensor) -> Tensor:
        pass

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        return []


def _inverse_softplus(value: float) -> float:
    if value < 0:
        raise ValueError(f"SST threshold must be nonnegative, got {value}")
    if value == 0:
        return -50.0
    return math.log(math.expm1(value))


class Sst(Activation):
    """Soft shrinkage with a learnable per-channel threshold gamma = softplus(raw)."""

    kind = "sst"

    def __init__(self, channels: int, threshold: float = 0.01):
        self.raw = Tensor(np.full(channels, _inverse_softplus(threshold)), requires_grad=True)

    @classmethod
    def with_threshold(cls, channels: int, threshold: float) -> "Sst":
        return cls(channels, threshold)

    @property
    def threshold(self) -> np.ndarray:
        return np.logaddexp(0, self.raw.data)

    def __call__(self, x: Tensor) -> Tensor:
        gamma = ops.reshape(ops.softplus(self.raw), (1, -1, 1, 1))
        return ops.sst(x, gamma)

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        return [(_join(prefix, "raw_threshold"), self.raw)]


class PRelu(Activation):
    kind = "prelu"

    def __init__(self, channels: int, slope: float = 0.25):
        self.slope = Tensor(np.full(channels, slope), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return ops.prelu(x, ops.reshape(self.slope, (1, -1, 1, 1)))

    def named_parameters(self, prefix: str = "") -> List[Tuple[str, Tensor]]:
        return [(_join(prefix, "slope"), self.slope)]


class Relu(Activation):
    kind = "relu"

    def __call__(self, x: Tensor) -> Tensor:
        return ops.relu(x)


class Identity(Activation):
    kind = "identity"

    def __call__(self, x: Tensor) -> Tensor:
        return x


def make_activation(kind: str, channels: int) -> Activation:
    if kind == "sst":
        return Sst(channels)
    if kind == "prelu":
        return PRelu(channels)
    if kind == "relu":
        return Relu()
    if kind == "identity":
        return Identity()
    raise ValueError(f"Unknown activation {kind!r}")
