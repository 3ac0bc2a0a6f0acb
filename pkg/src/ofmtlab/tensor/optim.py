"""Plain SGD and the step learning-rate schedule used for both streams."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

from ..errors import ConfigError, ParameterError
from .core import Tensor
from .layers import LayerParams


def sgd_update(params: Iterable[Union[LayerParams, Tensor]], lr: float) -> None:
    """In-place ``w <- w - lr * grad``, then zero the gradients.

    ``lr == 0`` is accepted and leaves parameters untouched.
    """
    if lr < 0:
        raise ParameterError(f"learning rate must be non-negative, got {lr}")
    for p in params:
        for t in (p.tensors() if isinstance(p, LayerParams) else (p,)):
            if t.grad is None:
                continue
            if lr:
                t.data -= (lr * t.grad).astype(t.dtype, copy=False)
            t.grad.fill(0)


@dataclass(frozen=True)
class LRSchedule:
    """Piecewise-constant rate: ``lr_i`` applies while ``epoch < bound_i``.

    Epochs past the last bound keep the last rate.

    >>> LRSchedule(((25, 0.01), (50, 0.001))).lr_at(24)
    0.01
    """

    steps: tuple[tuple[int, float], ...]

    def __post_init__(self):
        steps = tuple((int(b), float(lr)) for b, lr in self.steps)
        if not steps:
            raise ConfigError("learning-rate schedule is empty")
        bounds = [b for b, _ in steps]
        rates = [lr for _, lr in steps]
        if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])):
            raise ConfigError(f"schedule bounds must be strictly increasing: {bounds}")
        if any(r2 >= r1 for r1, r2 in zip(rates, rates[1:])):
            raise ConfigError(f"schedule rates must be strictly decreasing: {rates}")
        if rates[-1] <= 0:
            raise ConfigError("schedule rates must be positive")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def of(cls, steps: Sequence[Sequence[float]]) -> "LRSchedule":
        return cls(tuple((int(b), float(lr)) for b, lr in steps))

    def lr_at(self, epoch: int) -> float:
        for bound, lr in self.steps:
            if epoch < bound:
                return lr
        return self.steps[-1][1]


C3D_SCHEDULE = LRSchedule(((25, 0.01), (50, 0.001), (75, 1e-4), (100, 1e-5)))
LENET_SCHEDULE = LRSchedule(((25, 0.01), (50, 0.001)))
