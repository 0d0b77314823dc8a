"""Gradient-descent optimizers over a fixed list of parameter tensors."""

from abc import ABC, abstractmethod
from typing import Dict, List, Sequence

import numpy as np

from cscfuse.config import TrainConfig
from cscfuse.errors import ConfigError
from cscfuse.tensor.core import Tensor


class Optimizer(ABC):
    def __init__(self, params: Sequence[Tensor], lr: float):
        self.params: List[Tensor] = list(params)
        self.lr = lr

    @abstractmethod
    def step(self, grads: Dict[Tensor, np.ndarray]) -> None:
        """Update every parameter in place from its gradient."""
        pass


class Sgd(Optimizer):
    def step(self, grads: Dict[Tensor, np.ndarray]) -> None:
        for p in self.params:
            p.data = (p.data - self.lr * grads[p]).astype(p.dtype)


class Adam(Optimizer):
    """Adam with bias-corrected moment estimates."""

    def __init__(self, params: Sequence[Tensor], lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        super().__init__(params, lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self, grads: Dict[Tensor, np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = grads[p]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            if self.lr == 0:
                continue
            update = (m / correction1) / (np.sqrt(v / correction2) + self.eps)
            p.data = (p.data - self.lr * update).astype(p.dtype)


def build_optimizer(params: Sequence[Tensor], cfg: TrainConfig) -> Optimizer:
    if cfg.optimizer == "adam":
        return Adam(params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps)
    if cfg.optimizer == "sgd":
        return Sgd(params, cfg.lr)
    raise ConfigError(f"Unknown optimizer {cfg.optimizer!r}")
