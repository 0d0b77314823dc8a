"""
Reference convolutional sparse coding solver (ISTA).

Solves  min_z  1/2 ||x - d * z||^2 + lam * ||z||_1  by proximal gradient steps

    z_{k+1} = SST_{lam/rho}(z_k + (1/rho) d^T * (x - d * z_k))

All arithmetic is carried out in float64.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from cscfuse.errors import DivergenceError, ShapeError
from cscfuse.tensor import ops
from cscfuse.tensor.core import Tensor, no_grad, precision
from cscfuse.tensor.ops import ConvFilter

logger = logging.getLogger(__name__)


def _as64(value) -> np.ndarray:
    data = value.data if isinstance(value, Tensor) else value
    return np.asarray(data, dtype=np.float64)


@dataclass
class IstaProblem:
    """
    One sparse coding instance.

    The dictionary is stored output-major like every ConvFilter: its weight has
    shape (c, q, s, s), image channels first, which is the transpose of the
    atom-major (q, c, s, s) layout. Atom k is weight[:, k].

    Attributes:
        image: Observation x of shape (1, c, h, w)
        dictionary: Filter mapping codes to images, weight (c, q, s, s): q atoms of size c x s x s
        lam: Sparsity weight (> 0)
        rho: Inverse step size; must be at least the Lipschitz constant of d^T d
        iterations: Number of ISTA steps
    """

    image: np.ndarray
    dictionary: ConvFilter
    lam: float
    rho: float
    iterations: int = 100
    _lipschitz: Optional[float] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        self.image = _as64(self.image)
        if self.image.ndim != 4 or self.image.shape[0] != 1:
            raise ShapeError(f"ISTA image must have shape (1, c, h, w), got {self.image.shape}")
        if self.dictionary.q_out != self.image.shape[1]:
            raise ShapeError(
                f"Dictionary produces {self.dictionary.q_out} channels but the image has {self.image.shape[1]}"
            )
        if self.lam <= 0:
            raise ValueError(f"lam must be positive, got {self.lam}")
        if self.rho <= 0:
            raise ValueError(f"rho must be positive, got {self.rho}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")

    @property
    def code_shape(self) -> Tuple[int, int, int, int]:
        _, _, h, w = self.image.shape
        return (1, self.dictionary.q_in, h, w)

    def lipschitz(self) -> float:
        """Estimated Lipschitz constant L of d^T d on this image size (computed once)."""
        if self._lipschitz is None:
            self._lipschitz = estimate_lipschitz(self.dictionary, self.image.shape[2:])
        return self._lipschitz

    def has_stable_step(self) -> bool:
        """True when rho >= L, the condition for a nonincreasing objective."""
        return self.rho >= self.lipschitz()

    @classmethod
    def with_auto_rho(cls, image, dictionary: ConvFilter, lam: float, iterations: int = 100,
                      margin: float = 1.05) -> "IstaProblem":
        """Build a problem whose rho is `margin` times the estimated Lipschitz constant."""
        image = _as64(image)
        lipschitz = estimate_lipschitz(dictionary, image.shape[2:])
        logger.info("Estimated Lipschitz constant %.6g; using rho = %.6g", lipschitz, margin * lipschitz)
        problem = cls(image, dictionary, lam, margin * lipschitz, iterations)
        problem._lipschitz = lipschitz
        return problem


@dataclass
class IstaResult:
    code: np.ndarray
    trace: List[float] = field(default_factory=list)

    @property
    def final_objective(self) -> float:
        return self.trace[-1]


def _filter64(d: ConvFilter) -> ConvFilter:
    return ConvFilter(Tensor(_as64(d.weight), dtype=np.float64))


def csc_objective(problem: IstaProblem, z) -> float:
    """1/2 ||x - d * z||^2 + lam * ||z||_1, evaluated in float64."""
    with precision(np.float64), no_grad():
        code = Tensor(_as64(z), dtype=np.float64)
        if code.shape != problem.code_shape:
            raise ShapeError(f"Code must have shape {problem.code_shape}, got {code.shape}")
        residual = problem.image - ops.conv2d(code, _filter64(problem.dictionary)).data
        return float(0.5 * np.sum(residual ** 2) + problem.lam * np.sum(np.abs(code.data)))


def estimate_lipschitz(d: ConvFilter, spatial: Tuple[int, int], iterations: int = 50,
                       tol: float = 1e-6, seed: int = 0) -> float:
    """
    Largest eigenvalue of z -> d^T * (d * z) on codes of the given spatial size.

    Power iteration with a seeded start; stops after `iterations` steps or when
    the Rayleigh quotient changes by less than `tol` (relative).
    """
    h, w = spatial
    d64 = _filter64(d)
    dt = ops.flip_filter(d64)
    rng = np.random.default_rng(seed)
    with precision(np.float64), no_grad():
        v = rng.standard_normal((1, d64.q_in, h, w))
        v /= np.linalg.norm(v)
        estimate = 0.0
        for k in range(iterations):
            av = ops.conv2d(ops.conv2d(Tensor(v), d64), dt).data
            previous, estimate = estimate, float(np.vdot(v, av))
            norm = float(np.linalg.norm(av))
            if norm == 0.0:
                return 0.0
            v = av / norm
            if k > 0 and abs(estimate - previous) <= tol * abs(estimate):
                logger.debug("Power iteration converged after %d steps", k + 1)
                break
    return estimate


def ista_step(problem: IstaProblem, z) -> np.ndarray:
    """One proximal gradient step from code z."""
    d64 = _filter64(problem.dictionary)
    with precision(np.float64), no_grad():
        code = Tensor(_as64(z), dtype=np.float64)
        residual = Tensor(problem.image) - ops.conv2d(code, d64)
        moved = code + ops.conv2d(residual, ops.flip_filter(d64)) / problem.rho
        return ops.sst(moved, problem.lam / problem.rho).data


def ista_solve(problem: IstaProblem, z0: Optional[np.ndarray] = None) -> IstaResult:
    """
    Run `problem.iterations` ISTA steps starting from zero (or z0).

    Returns:
        IstaResult whose trace holds the objective at the start and after every step
        (length iterations + 1)

    Raises:
        DivergenceError: If the objective stops being finite
    """
    if not problem.has_stable_step():
        logger.warning("rho=%g is below the estimated Lipschitz constant %.6g; the objective may increase",
                       problem.rho, problem.lipschitz())
    z = np.zeros(problem.code_shape) if z0 is None else _as64(z0).copy()
    trace = [csc_objective(problem, z)]
    for k in range(1, problem.iterations + 1):
        z = ista_step(problem, z)
        value = csc_objective(problem, z)
        if not math.isfinite(value):
            raise DivergenceError(
                f"ISTA objective became non-finite at iteration {k}; "
                f"rho={problem.rho:g} is probably below the Lipschitz constant",
                diagnostics={"iteration": k, "rho": problem.rho, "lam": problem.lam},
            )
        trace.append(value)
        if k % 50 == 0:
            logger.debug("ISTA iteration %d: objective %.6e", k, value)
    return IstaResult(code=z, trace=trace)
