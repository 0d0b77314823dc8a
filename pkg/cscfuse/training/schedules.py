"""Learning-rate and loss-weight schedules."""

from dataclasses import dataclass, field
from typing import List

from cscfuse.training.losses import lambda_mef_schedule


@dataclass
class StepSchedule:
    """Multiply the base rate by gamma once for every milestone epoch already completed."""

    base_lr: float
    milestones: List[int] = field(default_factory=list)
    gamma: float = 0.1

    def lr_at(self, epoch: int) -> float:
        """Learning rate for a 1-based epoch."""
        passed = sum(1 for m in self.milestones if epoch > m)
        return self.base_lr * self.gamma ** passed


__all__ = ["StepSchedule", "lambda_mef_schedule"]
