"""Tensor value type and the reverse-mode gradient tape."""

import itertools
import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]
BackwardFn = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]

_state = threading.local()
_sequence = itertools.count()

# Operator names whose backward output is deliberately scaled (negative control for gradcheck)
_corrupted_ops: set = set()


def default_dtype() -> np.dtype:
    """Floating dtype new tensors get in the current thread (float32 unless in precision())."""
    return getattr(_state, "dtype", np.dtype(np.float32))


def grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def precision(dtype=np.float64):
    """Create tensors in `dtype` inside the block (64-bit is used for gradient checks)."""
    previous = default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


@contextmanager
def no_grad():
    """Run the block without recording operations on the tape."""
    previous = grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@contextmanager
def corrupt_gradient(op_name: str):
    """Double the backward output of one operator (test hook for the gradient checker)."""
    _corrupted_ops.add(op_name)
    try:
        yield
    finally:
        _corrupted_ops.discard(op_name)


@contextmanager
def record_kinks():
    """Collect the kink distances reported by piecewise-linear operators inside the block."""
    previous = getattr(_state, "kinks", None)
    _state.kinks = []
    try:
        yield _state.kinks
    finally:
        _state.kinks = previous


def report_kink(distance: np.ndarray) -> None:
    """Record each input element's signed distance to its operator's kink (no-op outside record_kinks)."""
    kinks = getattr(_state, "kinks", None)
    if kinks is not None:
        kinks.append(np.array(distance, dtype=np.float64))


class Tensor:
    """
    Dense numeric array that may take part in a gradient tape.

    Image tensors are 4-D (n, c, h, w); reductions produce lower-rank tensors and
    losses are 0-d.
    """

    __slots__ = ("data", "requires_grad", "_record", "name", "__weakref__")

    def __init__(self, data: ArrayLike, requires_grad: bool = False, dtype=None, name: Optional[str] = None):
        self.data = np.asarray(data, dtype=dtype if dtype is not None else default_dtype())
        self.requires_grad = requires_grad
        self._record: Optional["Record"] = None
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad}{label})"

    # Arithmetic is provided by cscfuse.tensor.ops, which installs the operators below.
    def __add__(self, other): return _ops().add(self, other)
    def __radd__(self, other): return _ops().add(other, self)
    def __sub__(self, other): return _ops().sub(self, other)
    def __rsub__(self, other): return _ops().sub(other, self)
    def __mul__(self, other): return _ops().mul(self, other)
    def __rmul__(self, other): return _ops().mul(other, self)
    def __truediv__(self, other): return _ops().div(self, other)
    def __rtruediv__(self, other): return _ops().div(other, self)
    def __neg__(self): return _ops().neg(self)
    def __pow__(self, exponent: float): return _ops().power(self, exponent)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _ops().sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return _ops().mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)


def _ops():
    from cscfuse.tensor import ops
    return ops


@dataclass
class Record:
    """One executed operation: its inputs and the closure mapping d(out) to d(inputs)."""

    seq: int
    op: str
    inputs: Tuple[Tensor, ...]
    backward: BackwardFn
    out_id: int = 0


def as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    """Wrap constants as non-differentiable tensors matching `like`'s dtype."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype if dtype is not None else default_dtype()))


def apply_op(op: str, inputs: Sequence[Tensor], out_data: np.ndarray, backward: BackwardFn) -> Tensor:
    """
    Wrap an operator result and record it when any input participates in the tape.

    Args:
        op: Operator name (used by the gradient checker's reports)
        inputs: Input tensors, in the order `backward` returns their gradients
        out_data: Forward result
        backward: Maps the output gradient to one gradient (or None) per input

    Returns:
        Output tensor
    """
    out = Tensor(out_data, dtype=out_data.dtype)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out._record = Record(next(_sequence), op, tuple(inputs), backward, id(out))
    return out


def unbroadcast(grad_arr: np.ndarray, to_shape: Tuple[int, ...]) -> np.ndarray:
    """Sum out broadcast dimensions so that grad_arr matches to_shape."""
    if grad_arr.shape == to_shape:
        return grad_arr
    while grad_arr.ndim > len(to_shape):
        grad_arr = grad_arr.sum(axis=0)
    for dim, size in enumerate(to_shape):
        if size == 1 and grad_arr.shape[dim] != 1:
            grad_arr = grad_arr.sum(axis=dim, keepdims=True)
    return grad_arr


class GradTape:
    """
    Executed operations reachable from one output, in execution order.

    The reverse sweep visits every record exactly once, newest first, and
    accumulates gradients additively where a tensor fans out.
    """

    def __init__(self, records: Iterable[Record]):
        self.records: List[Record] = sorted(records, key=lambda r: r.seq)

    @classmethod
    def trace(cls, output: Tensor) -> "GradTape":
        seen: Dict[int, Record] = {}
        stack = [output]
        while stack:
            tensor = stack.pop()
            record = tensor._record
            if record is None or record.seq in seen:
                continue
            seen[record.seq] = record
            stack.extend(record.inputs)
        return cls(seen.values())

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, output: Tensor, seed: Optional[np.ndarray] = None) -> Dict[int, np.ndarray]:
        """Run the reverse sweep; returns gradients of leaf tensors keyed by id()."""
        grads: Dict[int, np.ndarray] = {
            id(output): np.ones_like(output.data) if seed is None else np.asarray(seed, dtype=output.dtype)
        }
        for record in reversed(self.records):
            g_out = grads.pop(record.out_id, None)
            if g_out is None:
                continue
            g_inputs = record.backward(g_out)
            if record.op in _corrupted_ops:
                g_inputs = tuple(None if g is None else 2.0 * g for g in g_inputs)
            for tensor, g in zip(record.inputs, g_inputs):
                if g is None or not tensor.requires_grad:
                    continue
                g = unbroadcast(np.asarray(g, dtype=tensor.dtype), tensor.shape)
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g
        return grads


def grad(loss: Tensor, params: Sequence[Tensor]) -> Dict[Tensor, np.ndarray]:
    """
    Gradient of a scalar loss with respect to each parameter.

    Args:
        loss: 0-d (or single-element) tensor produced by recorded operations
        params: Leaf tensors to differentiate against

    Returns:
        Map from each parameter to an array of its shape (zeros when unreached)
    """
    if loss.data.size != 1:
        raise ValueError(f"grad() needs a scalar loss, got shape {loss.shape}")
    tape = GradTape.trace(loss)
    logger.debug("Reverse sweep over %d recorded operations", len(tape))
    leaf_grads = tape.backward(loss)
    result: Dict[Tensor, np.ndarray] = {}
    for p in params:
        g = leaf_grads.get(id(p))
        result[p] = np.zeros_like(p.data) if g is None else g
    return result
