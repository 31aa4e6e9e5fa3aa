"""
SGD with momentum and the step-decay learning-rate schedule
"""
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import ConfigValidationError
from .registry import ParamRegistry, require_gradients


@dataclass
class SgdState:
    lr: float
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr < 0 or not 0.0 <= self.momentum < 1.0:
            raise ConfigValidationError(f"invalid SGD settings lr={self.lr}, momentum={self.momentum}")


def sgd_step(registry: ParamRegistry, grads: Mapping[str, np.ndarray], state: SgdState) -> ParamRegistry:
    """v ← μv + g; w ← w − lr·v for every trainable leaf, in registry order."""
    require_gradients(registry, grads)
    for name, param in registry.trainable_items():
        g = np.asarray(grads[name], dtype=param.dtype)
        v = state.velocity.get(name)
        v = g.copy() if v is None else state.momentum * v + g
        state.velocity[name] = v
        param.assign(param.data - state.lr * v)
    return registry


@dataclass(frozen=True)
class StepDecaySchedule:
    """lr = base · factor^(number of decay epochs already reached)."""
    base_lr: float
    decay_epochs: Sequence[int] = ()
    factor: float = 0.1

    def lr_at(self, epoch: int) -> float:
        passed = sum(1 for e in self.decay_epochs if epoch >= e)
        return self.base_lr * self.factor ** passed

    def is_decay_epoch(self, epoch: int) -> bool:
        return epoch in self.decay_epochs
