"""Seeded training loop shared by the three pipelines."""

import json
import logging
import math
from abc import ABC, abstractmethod
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from cscfuse.config import RunConfig
from cscfuse.errors import DataError, DivergenceError
from cscfuse.pipelines.checkpoint import Checkpoint
from cscfuse.pipelines.models import FusionModel
from cscfuse.tensor.core import Tensor, grad, no_grad
from cscfuse.training.optim import build_optimizer
from cscfuse.training.schedules import StepSchedule

logger = logging.getLogger(__name__)

# (model, batch, training, iteration) -> (scalar loss, extra diagnostics)
LossFn = Callable[[FusionModel, Any, bool, int], Tuple[Tensor, Dict[str, float]]]


def crop_box(rng: np.random.Generator, h: int, w: int, size: int) -> Tuple[int, int]:
    """Top-left corner of a uniformly placed size x size crop."""
    return int(rng.integers(0, h - size + 1)), int(rng.integers(0, w - size + 1))


def crop_side(shapes: Sequence[Tuple[int, int]], crop: int, multiple: int = 1) -> int:
    """Largest usable crop side: the configured crop, shrunk to fit every image, rounded down to `multiple`."""
    side = min([crop] + [min(h, w) for h, w in shapes])
    side -= side % multiple
    if side < 1:
        raise DataError(f"Images of sizes {sorted(set(shapes))} are too small to crop")
    return side


class TrainingData(ABC):
    """A task's training items plus how to turn a list of indices into a batch."""

    @abstractmethod
    def __len__(self) -> int:
        pass

    @abstractmethod
    def batch(self, indices: Sequence[int], rng: np.random.Generator, crop: int, flip: bool) -> Any:
        """Random crops (and flips) of the indexed items, stacked into one batch."""
        pass

    @abstractmethod
    def full(self, index: int) -> Any:
        """One uncropped item as a batch of one (validation)."""
        pass


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    lr: float
    steps: int
    lambda_mef: Optional[float] = None
    val_loss: Optional[float] = None


@dataclass
class TrainingLog:
    """Per-epoch history of a run, written next to the checkpoint by the CLI."""

    task: str = ""
    seed: int = 0
    epochs: List[EpochRecord] = field(default_factory=list)
    digest: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task": self.task,
            "seed": self.seed,
            "digest": self.digest,
            "epochs": [{k: v for k, v in asdict(r).items() if v is not None} for r in self.epochs],
        }

    def write(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), indent=2))
        return path


def _snapshot(model: FusionModel) -> "OrderedDict[str, np.ndarray]":
    return OrderedDict((name, np.array(value, copy=True)) for name, value in model.state_arrays().items())


def _finite_grads(grads: Dict[Tensor, np.ndarray]) -> bool:
    return all(np.all(np.isfinite(g)) for g in grads.values())


class Trainer:
    """
    Epoch/batch loop: shuffle with the run seed, crop, step the optimizer.

    The learning rate follows a StepSchedule per epoch. Before every update the
    parameters that produced the (finite) loss are kept, so a divergence can
    hand back the last good checkpoint.
    """

    def __init__(self, model: FusionModel, run_config: RunConfig, data: TrainingData, loss_fn: LossFn):
        self.model = model
        self.run_config = run_config
        self.data = data
        self.loss_fn = loss_fn

    def _split(self) -> Tuple[np.ndarray, np.ndarray]:
        n = len(self.data)
        fraction = self.run_config.train.validation_fraction
        n_val = max(1, int(round(fraction * n))) if fraction > 0 else 0
        if n - n_val < 1:
            raise DataError(f"Dataset of {n} item(s) leaves nothing to train on with validation_fraction={fraction}")
        return np.arange(n - n_val), np.arange(n - n_val, n)

    def _checkpoint(self, arrays) -> Checkpoint:
        return Checkpoint(kind=self.model.kind, config=self.run_config.to_dict(), arrays=OrderedDict(
            (name, np.array(value, dtype=np.float32)) for name, value in arrays.items()
        ))

    def _diverged(self, what: str, diagnostics: Dict[str, Any], last_good) -> DivergenceError:
        text = ", ".join(f"{k}={v}" for k, v in diagnostics.items())
        checkpoint = self._checkpoint(last_good) if last_good is not None else None
        return DivergenceError(f"Training diverged: {what} ({text})", diagnostics, checkpoint)

    def validate(self, indices: Sequence[int], iteration: int) -> float:
        with no_grad():
            losses = [float(self.loss_fn(self.model, self.data.full(int(i)), False, iteration)[0].data)
                      for i in indices]
        return float(np.mean(losses))

    def fit(self, log: Optional[TrainingLog] = None) -> Checkpoint:
        cfg = self.run_config.train
        log = log if log is not None else TrainingLog()
        log.task, log.seed = self.model.kind, cfg.seed

        train_idx, val_idx = self._split()
        rng = np.random.default_rng((cfg.seed, 1))
        schedule = StepSchedule(cfg.lr, list(cfg.lr_milestones), cfg.lr_gamma)
        params = self.model.parameters()
        optimizer = build_optimizer(params, cfg)
        logger.info(
            f"Training {self.model.kind} model: {len(train_idx)} item(s), {len(val_idx)} held out, "
            f"{cfg.epochs} epoch(s), batch {cfg.batch_size}, seed {cfg.seed}"
        )

        step = 0
        last_good = None
        for epoch in range(1, cfg.epochs + 1):
            optimizer.lr = schedule.lr_at(epoch)
            order = rng.permutation(train_idx)
            losses: List[float] = []
            info: Dict[str, float] = {}
            for start in range(0, len(order), cfg.batch_size):
                step += 1
                batch = self.data.batch(order[start:start + cfg.batch_size], rng, cfg.crop_size, cfg.flip)
                before = _snapshot(self.model)
                loss, info = self.loss_fn(self.model, batch, True, step)
                value = float(loss.data)
                diagnostics = dict(epoch=epoch, step=step, loss=value, lr=optimizer.lr, **info)
                if not math.isfinite(value):
                    raise self._diverged("non-finite loss", diagnostics, last_good)
                grads = grad(loss, params)
                if not _finite_grads(grads):
                    raise self._diverged("non-finite gradient", diagnostics, before)
                last_good = before
                optimizer.step(grads)
                losses.append(value)
                logger.debug(f"step {step}: loss {value:.6g}")

            record = EpochRecord(epoch=epoch, loss=float(np.mean(losses)), lr=optimizer.lr, steps=len(losses),
                                 lambda_mef=info.get("lambda_mef"))
            if len(val_idx):
                record.val_loss = self.validate(val_idx, step)
            log.epochs.append(record)
            extra = f", lambda_mef {record.lambda_mef:g}" if record.lambda_mef is not None else ""
            val = f", val {record.val_loss:.6g}" if record.val_loss is not None else ""
            logger.info(f"epoch {epoch}/{cfg.epochs}: loss {record.loss:.6g}, lr {record.lr:g}{extra}{val}")

        checkpoint = self._checkpoint(self.model.state_arrays())
        log.digest = checkpoint.digest
        return checkpoint
