"""Central finite-difference verification of reverse-mode gradients."""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from cscfuse.tensor.core import Tensor, grad, no_grad, record_kinks

logger = logging.getLogger(__name__)


@dataclass
class GradCheckResult:
    max_error: float
    checked: int
    excluded: int


def _near_kink(base: List[np.ndarray], moved: Sequence[List[np.ndarray]], radius: float) -> bool:
    """
    True when some kinked operator input sits within `radius` shifts of its kink.

    The shift of an input element is how far the perturbation moved it, so the
    perturbed element itself is tested against radius * eps while elements that
    did not move are never tested.
    """
    if any(len(run) != len(base) for run in moved):
        return True
    for k, distance in enumerate(base):
        runs = [run[k] for run in moved]
        if any(run.shape != distance.shape for run in runs):
            return True
        shift = np.max([np.abs(run - distance) for run in runs], axis=0)
        if np.any((shift > 0) & (np.abs(distance) <= radius * shift)):
            return True
    return False


def check_gradients(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-4,
                    max_elements: Optional[int] = None, seed: int = 0,
                    kink_radius: float = 10.0) -> GradCheckResult:
    """
    Compare grad() against central differences, element by element.

    SST, ReLU, PReLU and abs report every input's distance to their kink
    (|x| - gamma or x). An element is excluded when, across its +eps and -eps
    evaluations, any such input lies within `kink_radius` times its own shift
    of the kink: kink_radius * eps for the perturbed element, less for inputs
    reached through the graph.

    Args:
        loss_fn: Rebuilds the scalar loss from the current parameter values
        params: Float64 leaf tensors; perturbed in place and restored
        eps: Perturbation size
        max_elements: Check at most this many seeded-random elements per parameter
        seed: Seed for element sampling
        kink_radius: Exclusion distance in units of the input's shift

    Returns:
        GradCheckResult with the max relative error
        |g_ad - g_fd| / max(floor, |g_ad| + |g_fd|), floor = max(1e-8, 1e-6 * max|g_ad|)
    """
    for p in params:
        if p.dtype != np.float64:
            raise ValueError(f"Gradient checks need float64 parameters; got {p.dtype} for {p!r}")
        if not p.data.flags.c_contiguous:
            p.data = np.ascontiguousarray(p.data)

    with record_kinks() as base_kinks:
        loss = loss_fn()
    analytic = grad(loss, params)
    gmax = max((float(np.abs(g).max()) for g in analytic.values() if g.size), default=0.0)
    floor = max(1e-8, 1e-6 * gmax)

    def evaluate() -> Tuple[float, List[np.ndarray]]:
        with no_grad(), record_kinks() as kinks:
            value = float(loss_fn().data)
        return value, kinks

    rng = np.random.default_rng(seed)
    max_error, checked, excluded = 0.0, 0, 0
    for p in params:
        flat = p.data.reshape(-1)
        g_flat = analytic[p].reshape(-1)
        indices = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            indices = np.sort(rng.choice(flat.size, size=max_elements, replace=False))
        for i in indices:
            original = flat[i]
            flat[i] = original + eps
            f_plus, kinks_plus = evaluate()
            flat[i] = original - eps
            f_minus, kinks_minus = evaluate()
            flat[i] = original

            if _near_kink(base_kinks, (kinks_plus, kinks_minus), kink_radius):
                excluded += 1
                continue
            fd = (f_plus - f_minus) / (2 * eps)
            ad = float(g_flat[i])
            error = abs(ad - fd) / max(floor, abs(ad) + abs(fd))
            max_error = max(max_error, error)
            checked += 1

    logger.debug("Gradient check: %d elements checked, %d near kinks excluded, max error %.3e",
                 checked, excluded, max_error)
    return GradCheckResult(max_error=max_error, checked=checked, excluded=excluded)


def finite_diff_check(loss_fn: Callable[[], Tensor], params: Sequence[Tensor], eps: float = 1e-4,
                      max_elements: Optional[int] = None) -> float:
    """Max relative error between grad() and central differences (kinks excluded)."""
    return check_gradients(loss_fn, params, eps=eps, max_elements=max_elements).max_error
