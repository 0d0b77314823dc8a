"""Minimal deterministic tensor engine with reverse-mode differentiation."""

from cscfuse.tensor.core import (
    GradTape,
    Tensor,
    corrupt_gradient,
    default_dtype,
    grad,
    no_grad,
    precision,
    record_kinks,
)
from cscfuse.tensor.gradcheck import check_gradients, finite_diff_check
from cscfuse.tensor.ops import (
    ConvFilter,
    batch_norm,
    conv2d,
    conv2d_transpose,
    flip_filter,
    prelu,
    sigmoid,
    softmax_over_set,
    sst,
)

__all__ = [
    "ConvFilter", "GradTape", "Tensor", "batch_norm", "check_gradients", "conv2d",
    "conv2d_transpose", "corrupt_gradient", "default_dtype", "finite_diff_check",
    "flip_filter", "grad", "no_grad", "precision", "prelu", "record_kinks", "sigmoid",
    "softmax_over_set", "sst",
]
