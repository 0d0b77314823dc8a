"""
Finite-difference check suites behind `cscfuse gradcheck`.

Operator checks must agree to 1e-4 relative error, end-to-end pipeline
checks to 1e-3. Everything runs in float64 on seeded inputs.
"""

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from cscfuse.config import ModelConfig
from cscfuse.csc.dcu import Dcu, DcuStack
from cscfuse.imaging import differentiable, kernels
from cscfuse.pipelines.models import build_model
from cscfuse.tensor import ops
from cscfuse.tensor.core import Tensor, precision
from cscfuse.tensor.gradcheck import check_gradients
from cscfuse.tensor.ops import ConvFilter
from cscfuse.training import losses

logger = logging.getLogger(__name__)

OPERATOR_TOLERANCE = 1e-4
PIPELINE_TOLERANCE = 1e-3
PIPELINE_SAMPLES = 6

# Per-suite perturbation sizes; suites coupled through batch norm take smaller steps
DEFAULT_EPS = 1e-4
SUITE_EPS = {"csc_core": 1e-5, "pipelines": 1e-6}

# A check builds (loss_fn, params); both are created inside a float64 block
Check = Callable[[np.random.Generator], Tuple[Callable[[], Tensor], List[Tensor]]]


@dataclass
class CheckOutcome:
    suite: str
    name: str
    max_error: float
    tolerance: float
    checked: int
    excluded: int

    @property
    def passed(self) -> bool:
        return self.checked > 0 and self.max_error <= self.tolerance


def _param(rng: np.random.Generator, *shape, low: float = -1.0, high: float = 1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


def _weighted(out_fn: Callable[[], Tensor], rng: np.random.Generator, shape) -> Callable[[], Tensor]:
    """Contract an output with fixed random weights so every element matters."""
    weights = Tensor(rng.standard_normal(shape))

    def loss() -> Tensor:
        return ops.sum(out_fn() * weights)
    return loss


def _unary(op: Callable[[Tensor], Tensor], low: float = -1.0, high: float = 1.0) -> Check:
    def build(rng):
        x = _param(rng, 2, 3, 4, low=low, high=high)
        return _weighted(lambda: op(x), rng, x.shape), [x]
    return build


def _arithmetic(rng):
    a = _param(rng, 3, 4)
    b = _param(rng, 3, 4, low=0.5, high=1.5)
    c = _param(rng, 4)
    return _weighted(lambda: (a * b + a / b - c) - b * c + (-a), rng, (3, 4)), [a, b, c]


def _reductions(rng):
    x = _param(rng, 2, 3, 4)
    return (lambda: ops.sum(ops.mean(x, axis=1, keepdims=True) * x) + ops.sum(ops.reshape(x, (6, 4)) ** 2)), [x]


def _stack_select(rng):
    xs = [_param(rng, 3, 4) for _ in range(3)]
    return _weighted(lambda: ops.select(ops.stack(xs, axis=0), 1) * ops.select(ops.stack(xs, axis=1), 2),
                     rng, (3, 4)), xs


def _conv2d(rng):
    x = _param(rng, 2, 3, 6, 6)
    f = ConvFilter(_param(rng, 4, 3, 3, 3), _param(rng, 4))
    return _weighted(lambda: ops.conv2d(x, f), rng, (2, 4, 6, 6)), [x, f.weight, f.bias]


def _conv2d_transpose(rng):
    y = _param(rng, 2, 4, 5, 5)
    f = ConvFilter(_param(rng, 4, 3, 3, 3))
    return _weighted(lambda: ops.conv2d_transpose(y, f), rng, (2, 3, 5, 5)), [y, f.weight]


def _sst(rng):
    x = _param(rng, 2, 3, 4, 4)
    gamma = _param(rng, 1, 3, 1, 1, low=0.1, high=0.4)
    return _weighted(lambda: ops.sst(x, gamma), rng, x.shape), [x, gamma]


def _prelu(rng):
    x = _param(rng, 2, 3, 4, 4)
    slope = _param(rng, 1, 3, 1, 1, low=0.1, high=0.4)
    return _weighted(lambda: ops.prelu(x, slope), rng, x.shape), [x, slope]


def _batch_norm(training: bool) -> Check:
    def build(rng):
        x = _param(rng, 3, 2, 4, 4)
        gamma = _param(rng, 2, low=0.5, high=1.5)
        beta = _param(rng, 2)
        mean, var = rng.uniform(-0.2, 0.2, 2), rng.uniform(0.5, 1.5, 2)
        return _weighted(lambda: ops.batch_norm(x, gamma, beta, mean.copy(), var.copy(), training=training),
                         rng, x.shape), [x, gamma, beta]
    return build


def _softmax(rng):
    x = _param(rng, 2, 3, 4)
    return _weighted(lambda: ops.softmax(x, axis=1), rng, x.shape), [x]


def _softmax_over_set(rng):
    xs = [_param(rng, 3, 4) for _ in range(3)]
    weights = [Tensor(rng.standard_normal((3, 4))) for _ in xs]

    def loss():
        return sum((ops.sum(w * s) for w, s in zip(weights, ops.softmax_over_set(xs))), Tensor(0.0))
    return loss, xs


def _separable(rng):
    x = _param(rng, 2, 7, 9)
    mh, mw = kernels.box_matrix(7, 2), kernels.interp_matrix(9, 18, "bicubic")
    return _weighted(lambda: ops.separable(x, mh, mw), rng, (2, 7, 18)), [x]


def _patches(rng):
    x = _param(rng, 2, 6, 7)
    return _weighted(lambda: ops.patches(x, 3), rng, (2, 4, 5, 3, 3)), [x]


def _fast_guided_filter(rng):
    p = _param(rng, 1, 2, 16, 16, low=0.0)
    guide = _param(rng, 1, 2, 16, 16, low=0.0)
    return _weighted(lambda: differentiable.fast_guided_filter(p, guide, 4, 1e-2, 2), rng, p.shape), [p, guide]


def _dcu(training: bool) -> Check:
    def build(rng):
        unit = Dcu.create(2, 4, 3, "sst", rng)
        x = _param(rng, 2, 2, 8, 8)
        z = _param(rng, 2, 4, 8, 8)
        return _weighted(lambda: unit.forward(x, z, training), rng, z.shape), [x, z] + unit.parameters()
    return build


def _dcu_stack(rng):
    stack = DcuStack.create(2, 1, 4, 3, "prelu", rng)
    x = _param(rng, 2, 1, 8, 8)
    return _weighted(lambda: stack.forward(x, True), rng, (2, 4, 8, 8)), [x] + stack.parameters()


def _image(rng, *shape) -> Tensor:
    return Tensor(rng.uniform(0.05, 0.95, size=shape))


def _loss_check(make: Callable[[Tensor, Tensor], Tensor], channels: int = 1) -> Check:
    def build(rng):
        target = _image(rng, 2, channels, 16, 16)
        fused = _param(rng, 2, channels, 16, 16, low=0.05, high=0.95)
        return (lambda: make(target, fused)), [fused]
    return build


def _mefssim_check(lambda_mef: Optional[float]) -> Check:
    def build(rng):
        sources = rng.uniform(0.0, 1.0, size=(2, 3, 16, 16))
        fused = _param(rng, 2, 1, 16, 16, low=0.05, high=0.95)
        if lambda_mef is None:
            return (lambda: losses.mefssim(sources, fused)), [fused]
        return (lambda: losses.mef_loss(sources, fused, lambda_mef)), [fused]
    return build


def _tiny_model(**overrides) -> ModelConfig:
    values = dict(units=2, code_channels=4, kernel_size=3)
    values.update(overrides)
    return ModelConfig(**values)


def _ivf_pipeline(rng):
    model = build_model("ivf", _tiny_model(base_radius=3), seed=1)
    x = _image(rng, 2, 1, 16, 16)
    return (lambda: losses.ivf_loss(x, model.reconstruct(x, True))), model.parameters()


def _mef_pipeline(rng):
    model = build_model("mef", _tiny_model(), seed=2)
    ys = _image(rng, 2, 3, 16, 16)
    return (lambda: losses.mef_loss(ys.data, model.fuse_y(ys, True)[0], 1.0)), model.parameters()


def _mmf_pipeline(rng):
    cfg = _tiny_model(in_channels=2, guide_channels=3, scale=2, fgf_radius=4, fgf_subsample=2)
    model = build_model("mmf", cfg, seed=3)
    lr, guide, hr = _image(rng, 1, 2, 8, 8), _image(rng, 1, 3, 16, 16), _image(rng, 1, 2, 16, 16)
    return (lambda: losses.mse(model.forward(lr, guide, True), hr)), model.parameters()


SUITES: "OrderedDict[str, Dict[str, Check]]" = OrderedDict([
    ("tensor_core", OrderedDict([
        ("arithmetic", _arithmetic),
        ("power", _unary(lambda x: x ** 3.0)),
        ("exp", _unary(ops.exp)),
        ("log", _unary(ops.log, low=0.5, high=2.0)),
        ("absolute", _unary(ops.absolute)),
        ("relu", _unary(ops.relu)),
        ("sigmoid", _unary(ops.sigmoid, low=-4.0, high=4.0)),
        ("softplus", _unary(ops.softplus, low=-4.0, high=4.0)),
        ("sum/mean/reshape", _reductions),
        ("stack/select", _stack_select),
        ("conv2d", _conv2d),
        ("conv2d_transpose", _conv2d_transpose),
        ("sst", _sst),
        ("prelu", _prelu),
        ("batch_norm[train]", _batch_norm(True)),
        ("batch_norm[eval]", _batch_norm(False)),
        ("softmax", _softmax),
        ("softmax_over_set", _softmax_over_set),
        ("separable", _separable),
        ("patches", _patches),
        ("fast_guided_filter", _fast_guided_filter),
    ])),
    ("csc_core", OrderedDict([
        ("dcu[train]", _dcu(True)),
        ("dcu[eval]", _dcu(False)),
        ("dcu_stack", _dcu_stack),
    ])),
    ("losses", OrderedDict([
        ("mse", _loss_check(losses.mse)),
        ("ssim", _loss_check(losses.ssim)),
        ("ivf_loss", _loss_check(lambda x, y: losses.ivf_loss(x, y, 5.0))),
        ("halo_loss", _loss_check(lambda x, y: losses.halo_loss(y))),
        ("mefssim", _mefssim_check(None)),
        ("mef_loss", _mefssim_check(2.0)),
    ])),
    ("pipelines", OrderedDict([
        ("ivfn", _ivf_pipeline),
        ("mefn", _mef_pipeline),
        ("mmfn", _mmf_pipeline),
    ])),
])

MODULE_NAMES = tuple(SUITES)


def run_suites(names: Sequence[str] = MODULE_NAMES, seed: int = 0) -> List[CheckOutcome]:
    """Run the named suites in order; every check gets its own seeded generator."""
    outcomes: List[CheckOutcome] = []
    for suite in names:
        if suite not in SUITES:
            raise ValueError(f"Unknown check suite {suite!r}; expected one of {MODULE_NAMES}")
        pipeline = suite == "pipelines"
        tolerance = PIPELINE_TOLERANCE if pipeline else OPERATOR_TOLERANCE
        for index, (name, build) in enumerate(SUITES[suite].items()):
            rng = np.random.default_rng((seed, MODULE_NAMES.index(suite), index))
            with precision(np.float64):
                loss_fn, params = build(rng)
                result = check_gradients(loss_fn, params, eps=SUITE_EPS.get(suite, DEFAULT_EPS),
                                         max_elements=PIPELINE_SAMPLES if pipeline else None, seed=seed)
            outcome = CheckOutcome(suite, name, result.max_error, tolerance, result.checked, result.excluded)
            logger.info(f"{suite}/{name}: max relative error {result.max_error:.3e} ({result.checked} checked)")
            outcomes.append(outcome)
    return outcomes
