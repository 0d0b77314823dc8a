"""
The fixed operator set: arithmetic, reductions, convolution, activations,
batch normalization, softmax and separable linear filtering.

Every operator takes and returns Tensors and records itself on the gradient
tape when one of its inputs requires a gradient.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from cscfuse.errors import ShapeError
from cscfuse.tensor.core import Tensor, apply_op, as_tensor, report_kink

Operand = Union[Tensor, float, int, np.ndarray]


def _pair(a: Operand, b: Operand) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    if isinstance(b, Tensor):
        return as_tensor(a, like=b), b
    return as_tensor(a), as_tensor(b)


# ---------------------------------------------------------------------------
# Elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    return apply_op("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    return apply_op("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    return apply_op("mul", (a, b), a.data * b.data, lambda g: (g * b.data, g * a.data))


def div(a: Operand, b: Operand) -> Tensor:
    a, b = _pair(a, b)
    return apply_op(
        "div", (a, b), a.data / b.data,
        lambda g: (g / b.data, -g * a.data / (b.data * b.data)),
    )


def neg(a: Tensor) -> Tensor:
    return apply_op("neg", (a,), -a.data, lambda g: (-g,))


def power(a: Tensor, exponent: float) -> Tensor:
    out = a.data ** exponent
    return apply_op("power", (a,), out, lambda g: (g * exponent * a.data ** (exponent - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return apply_op("exp", (a,), out, lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    return apply_op("log", (a,), np.log(a.data), lambda g: (g / a.data,))


def absolute(a: Tensor) -> Tensor:
    # subgradient 0 at 0
    report_kink(a.data)
    return apply_op("abs", (a,), np.abs(a.data), lambda g: (g * np.sign(a.data),))


def relu(a: Tensor) -> Tensor:
    report_kink(a.data)
    mask = a.data > 0
    return apply_op("relu", (a,), np.where(mask, a.data, 0).astype(a.dtype), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    out = expit(a.data).astype(a.dtype)
    return apply_op("sigmoid", (a,), out, lambda g: (g * out * (1 - out),))


def softplus(a: Tensor) -> Tensor:
    out = np.logaddexp(0, a.data).astype(a.dtype)
    return apply_op("softplus", (a,), out, lambda g: (g * expit(a.data),))


# ---------------------------------------------------------------------------
# Reductions and shape
# ---------------------------------------------------------------------------

def _expand_reduced(g: np.ndarray, shape, axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape).copy()


def sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = np.sum(a.data, axis=axis, keepdims=keepdims)
    return apply_op("sum", (a,), np.asarray(out), lambda g: (_expand_reduced(g, a.shape, axis, keepdims),))


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.mean(a.data, axis=axis, keepdims=keepdims)
    count = a.data.size // max(np.asarray(out).size, 1)
    return apply_op(
        "mean", (a,), np.asarray(out, dtype=a.dtype),
        lambda g: (_expand_reduced(g, a.shape, axis, keepdims) / count,),
    )


def reshape(a: Tensor, shape) -> Tensor:
    return apply_op("reshape", (a,), a.data.reshape(shape), lambda g: (g.reshape(a.shape),))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(tensors)
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack needs tensors of one shape, got {sorted(shapes)}")
    out = np.stack([t.data for t in tensors], axis=axis)
    return apply_op(
        "stack", tensors, out,
        lambda g: tuple(np.take(g, i, axis=axis) for i in range(len(tensors))),
    )


def select(a: Tensor, index: int) -> Tensor:
    """Take a[index] along the leading axis."""
    def backward(g):
        full = np.zeros_like(a.data)
        full[index] = g
        return (full,)

    return apply_op("select", (a,), a.data[index].copy(), backward)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

@dataclass
class ConvFilter:
    """
    Bank of q_out x q_in square kernels with optional per-output bias.

    Convolution is cross-correlation with same-size zero padding and stride 1;
    the kernel size must be odd so that (h, w) is preserved.
    """

    weight: Tensor
    bias: Optional[Tensor] = None

    def __post_init__(self):
        w = self.weight
        if w.ndim != 4 or w.shape[2] != w.shape[3]:
            raise ShapeError(f"Filter weights must have shape (q_out, q_in, s, s), got {w.shape}")
        if w.shape[2] % 2 == 0:
            raise ShapeError(f"Filter size must be odd to preserve spatial size, got {w.shape[2]}")
        if self.bias is not None and self.bias.shape != (w.shape[0],):
            raise ShapeError(f"Bias must have shape ({w.shape[0]},), got {self.bias.shape}")

    @property
    def q_out(self) -> int:
        return self.weight.shape[0]

    @property
    def q_in(self) -> int:
        return self.weight.shape[1]

    @property
    def size(self) -> int:
        return self.weight.shape[2]


def _flip(w: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])


def _windows(x: np.ndarray, size: int) -> np.ndarray:
    pad = size // 2
    padded = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    return sliding_window_view(padded, (size, size), axis=(2, 3))


def _correlate(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    win = _windows(x, w.shape[2])
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def conv2d(x: Tensor, f: ConvFilter) -> Tensor:
    """
    Same-padded 2-D cross-correlation of x (n, q_in, h, w) with filter f.

    Returns:
        Tensor of shape (n, q_out, h, w)
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects a 4-D (n, c, h, w) input, got shape {x.shape}")
    if x.shape[1] != f.q_in:
        raise ShapeError(
            f"conv2d channel mismatch: input has {x.shape[1]} channels, filter expects {f.q_in} "
            f"(input {x.shape}, filter {f.weight.shape})"
        )
    w = f.weight.data.astype(x.dtype, copy=False)
    win = _windows(x.data, f.size)
    out = np.ascontiguousarray(np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2))
    inputs: Tuple[Tensor, ...] = (x, f.weight)
    if f.bias is not None:
        out = out + f.bias.data.reshape(1, -1, 1, 1)
        inputs = inputs + (f.bias,)

    def backward(g):
        grads = [_correlate(g, _flip(w)), np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))]
        if f.bias is not None:
            grads.append(g.sum(axis=(0, 2, 3)))
        return tuple(grads)

    return apply_op("conv2d", inputs, out, backward)


def flip_kernel(w: Tensor) -> Tensor:
    """Swap the in/out axes and rotate every kernel by 180 degrees."""
    return apply_op("flip_filter", (w,), _flip(w.data), lambda g: (_flip(g),))


def flip_filter(f: ConvFilter) -> ConvFilter:
    """Flipped filter d^T: (q_in, q_out, s, s) with rotated kernels; the bias is not carried over."""
    return ConvFilter(flip_kernel(f.weight))


def conv2d_transpose(y: Tensor, f: ConvFilter) -> Tensor:
    """Adjoint of conv2d(., f) without bias: maps (n, q_out, h, w) back to (n, q_in, h, w)."""
    return conv2d(y, flip_filter(ConvFilter(f.weight)))


# ---------------------------------------------------------------------------
# Activations
# ---------------------------------------------------------------------------

def sst(x: Tensor, gamma: Operand) -> Tensor:
    """Soft shrinkage thresholding sign(x) * relu(|x| - gamma)."""
    gamma = as_tensor(gamma, like=x)
    if np.any(gamma.data < 0):
        raise ValueError(f"SST threshold must be nonnegative, got minimum {gamma.data.min()}")
    magnitude = np.abs(x.data) - gamma.data
    report_kink(magnitude)
    active = magnitude > 0
    sign = np.sign(x.data)
    out = (sign * np.where(active, magnitude, 0)).astype(x.dtype)
    return apply_op("sst", (x, gamma), out, lambda g: (g * active, -g * sign * active))


def prelu(x: Tensor, slope: Operand) -> Tensor:
    slope = as_tensor(slope, like=x)
    report_kink(x.data)
    positive = x.data >= 0
    out = np.where(positive, x.data, slope.data * x.data).astype(x.dtype)
    return apply_op(
        "prelu", (x, slope), out,
        lambda g: (g * np.where(positive, 1, slope.data), g * np.where(positive, 0, x.data)),
    )


def batch_norm(x: Tensor, gamma: Tensor, beta: Tensor, running_mean: np.ndarray, running_var: np.ndarray,
               training: bool, momentum: float = 0.1, eps: float = 1e-5) -> Tensor:
    """
    Per-channel batch normalization with affine scale/shift.

    In training mode the batch statistics are used and the running statistics
    are updated in place (unbiased variance); in eval mode the running
    statistics are used.
    """
    if x.ndim != 4 or x.shape[1] != gamma.shape[0]:
        raise ShapeError(f"batch_norm expects (n, {gamma.shape[0]}, h, w), got {x.shape}")
    axes = (0, 2, 3)
    count = x.shape[0] * x.shape[2] * x.shape[3]
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        unbiased = var * count / (count - 1) if count > 1 else var
        running_mean *= (1 - momentum)
        running_mean += momentum * mu
        running_var *= (1 - momentum)
        running_var += momentum * unbiased
    else:
        mu = running_mean.astype(x.dtype, copy=False)
        var = running_var.astype(x.dtype, copy=False)

    inv_std = (1.0 / np.sqrt(var + eps)).reshape(1, -1, 1, 1).astype(x.dtype)
    xhat = (x.data - mu.reshape(1, -1, 1, 1)) * inv_std
    scale = gamma.data.reshape(1, -1, 1, 1)
    out = (scale * xhat + beta.data.reshape(1, -1, 1, 1)).astype(x.dtype)

    def backward(g):
        d_gamma = (g * xhat).sum(axis=axes)
        d_beta = g.sum(axis=axes)
        dxhat = g * scale
        if training:
            dx = inv_std / count * (
                count * dxhat
                - dxhat.sum(axis=axes, keepdims=True)
                - xhat * (dxhat * xhat).sum(axis=axes, keepdims=True)
            )
        else:
            dx = dxhat * inv_std
        return dx, d_gamma, d_beta

    return apply_op("batch_norm", (x, gamma, beta), out, backward)


def softmax(a: Tensor, axis: int) -> Tensor:
    shifted = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return apply_op(
        "softmax", (a,), out,
        lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),),
    )


def softmax_over_set(xs: Sequence[Tensor]) -> List[Tensor]:
    """Position-wise softmax across a list of equally shaped tensors."""
    stacked = softmax(stack(xs, axis=0), axis=0)
    return [select(stacked, k) for k in range(len(xs))]


# ---------------------------------------------------------------------------
# Linear filtering
# ---------------------------------------------------------------------------

def separable(x: Tensor, mh: np.ndarray, mw: np.ndarray) -> Tensor:
    """
    Apply a separable linear map to the two trailing axes: mh @ x @ mw.T.

    Box means, Sobel derivatives, Gaussian windows and resampling are all
    expressed through matrices built in cscfuse.imaging.kernels.
    """
    if x.shape[-2] != mh.shape[1] or x.shape[-1] != mw.shape[1]:
        raise ShapeError(f"separable maps ({mh.shape}, {mw.shape}) do not fit input {x.shape}")
    mh = mh.astype(x.dtype, copy=False)
    mw = mw.astype(x.dtype, copy=False)
    out = np.matmul(np.matmul(mh, x.data), mw.T)
    return apply_op("separable", (x,), out, lambda g: (np.matmul(np.matmul(mh.T, g), mw),))


def patches(x: Tensor, size: int) -> Tensor:
    """All size x size windows (valid positions): (..., h, w) -> (..., h', w', size, size)."""
    h, w = x.shape[-2:]
    if size > h or size > w:
        raise ShapeError(f"Window {size} does not fit input {x.shape}")
    out = sliding_window_view(x.data, (size, size), axis=(-2, -1)).copy()
    oh, ow = h - size + 1, w - size + 1

    def backward(g):
        gx = np.zeros_like(x.data)
        for i in range(size):
            for j in range(size):
                gx[..., i:i + oh, j:j + ow] += g[..., i, j]
        return (gx,)

    return apply_op("patches", (x,), out, backward)
