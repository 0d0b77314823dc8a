"""
Test-time merging operators for pairs of feature maps and for MEF chroma planes.

Feature maps are (c, h, w) arrays (2-D planes are accepted too). Every
strategy is a per-pixel convex combination fused = w1 * a + w2 * b.
"""

from dataclasses import dataclass
from typing import Callable, Dict, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from cscfuse.errors import ShapeError
from cscfuse.imaging.filters import guided_filter, saliency_map

L1_WINDOW = 3


@dataclass
class WeightPair:
    """Per-pixel weights of the two inputs; w1 + w2 = 1 and both lie in [0, 1]."""

    w1: np.ndarray
    w2: np.ndarray

    def combine(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return self.w1 * a + self.w2 * b


def _check_pair(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"Cannot fuse maps of shapes {a.shape} and {b.shape}")
    return a, b


def normalized_share(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """x / (x + y) for nonnegative x, y; 0.5 where both are zero."""
    total = x + y
    safe = np.where(total > 0, total, 1.0)
    return np.where(total > 0, x / safe, 0.5)


def fuse_average(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a, b = _check_pair(a, b)
    return (a + b) / 2.0


def l1_activity(x: np.ndarray) -> np.ndarray:
    """3x3 mean of the channel-summed absolute values."""
    plane = np.abs(x).sum(axis=0) if x.ndim == 3 else np.abs(x)
    return ndimage.uniform_filter(plane, size=L1_WINDOW, mode="nearest")


def fuse_l1(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, WeightPair]:
    """
    l1-norm activity fusion.

    Returns:
        (fused, weights); one weight map per input, broadcast across channels
    """
    a, b = _check_pair(a, b)
    w1 = normalized_share(l1_activity(a), l1_activity(b))
    w1 = np.broadcast_to(w1, a.shape).copy()
    weights = WeightPair(w1, 1.0 - w1)
    return weights.combine(a, b), weights


def initial_saliency_weight(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Unrefined weight of `a`: S_a / (S_a + S_b) on single-channel planes."""
    return normalized_share(saliency_map(a), saliency_map(b))


def _saliency_weights(a: np.ndarray, b: np.ndarray, radius: int, eps: float) -> Tuple[np.ndarray, np.ndarray]:
    initial = initial_saliency_weight(a, b)
    refined_a = np.clip(guided_filter(initial, a, radius, eps), 0.0, 1.0)
    refined_b = np.clip(guided_filter(1.0 - initial, b, radius, eps), 0.0, 1.0)
    w1 = normalized_share(refined_a, refined_b)
    return w1, 1.0 - w1


def fuse_saliency(a: np.ndarray, b: np.ndarray, radius: int = 8, eps: float = 1e-2) -> Tuple[np.ndarray, WeightPair]:
    """
    Saliency-weighted fusion, channel by channel.

    Initial weights come from the histogram-contrast saliency of each channel;
    each weight is refined by a guided filter steered by its own input channel,
    clipped to [0, 1] and renormalized.
    """
    a, b = _check_pair(a, b)
    planar = a.ndim == 2
    a3, b3 = (a[None], b[None]) if planar else (a, b)
    w1 = np.empty_like(a3)
    for c in range(a3.shape[0]):
        w1[c], _ = _saliency_weights(a3[c], b3[c], radius, eps)
    if planar:
        w1 = w1[0]
    weights = WeightPair(w1, 1.0 - w1)
    return weights.combine(a, b), weights


def fuse_chroma_l1(planes: Union[Sequence[np.ndarray], np.ndarray]) -> np.ndarray:
    """
    Fuse K chroma planes with weights |b_k - 0.5| normalized over k.

    Where every plane is neutral (all weights 0) the plain average is used.
    """
    stack = np.asarray(planes, dtype=np.float64)
    if stack.ndim < 3 or stack.shape[0] < 1:
        raise ShapeError(f"fuse_chroma_l1 needs a (K, h, w) stack, got shape {stack.shape}")
    weights = np.abs(stack - 0.5)
    total = weights.sum(axis=0)
    safe = np.where(total > 0, total, 1.0)
    weighted = (weights * stack).sum(axis=0) / safe
    return np.where(total > 0, weighted, stack.mean(axis=0))


def _average_with_weights(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, WeightPair]:
    a, b = _check_pair(a, b)
    half = np.full(a.shape, 0.5)
    return fuse_average(a, b), WeightPair(half, half.copy())


def get_strategy(name: str, radius: int = 8, eps: float = 1e-2) -> Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, WeightPair]]:
    """Strategy by name, normalized to return (fused, weights)."""
    strategies: Dict[str, Callable] = {
        "average": _average_with_weights,
        "l1": fuse_l1,
        "saliency": lambda a, b: fuse_saliency(a, b, radius, eps),
    }
    if name not in strategies:
        raise ValueError(f"Unknown fusion strategy {name!r}; expected one of {sorted(strategies)}")
    return strategies[name]
