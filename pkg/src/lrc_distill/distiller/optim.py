import math
from typing import Sequence

import numpy as np

from lrc_distill.distiller.models import LrSchedule, OptimizerKind
from lrc_distill.errors import ConfigError
from lrc_distill.tensor import Tensor


class Optimizer:
    """Constant learning-rate update rule over a fixed parameter list."""

    def __init__(self, params: Sequence[Tensor], learning_rate: float) -> None:
        if not learning_rate > 0.0:
            raise ConfigError(f"learning_rate must be > 0, got {learning_rate}")
        self.params = list(params)
        self.learning_rate = learning_rate

    def zero_grad(self) -> None:
        for param in self.params:
            param.zero_grad()

    def step(self) -> None:
        for slot, param in enumerate(self.params):
            if param.grad is not None:
                param.data = param.data - self._delta(slot, param.grad)

    def _delta(self, slot: int, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError


class SGD(Optimizer):
    def _delta(self, slot: int, grad: np.ndarray) -> np.ndarray:
        return self.learning_rate * grad


class Momentum(Optimizer):
    def __init__(
        self, params: Sequence[Tensor], learning_rate: float, momentum: float = 0.9
    ) -> None:
        super().__init__(params, learning_rate)
        self.momentum = momentum
        self._velocity = [np.zeros_like(p.data) for p in self.params]

    def _delta(self, slot: int, grad: np.ndarray) -> np.ndarray:
        self._velocity[slot] = self.momentum * self._velocity[slot] + grad
        return self.learning_rate * self._velocity[slot]


class Adam(Optimizer):
    def __init__(
        self,
        params: Sequence[Tensor],
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> None:
        super().__init__(params, learning_rate)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]
        self._t = 0

    def step(self) -> None:
        self._t += 1
        super().step()

    def _delta(self, slot: int, grad: np.ndarray) -> np.ndarray:
        self._m[slot] = self.beta1 * self._m[slot] + (1.0 - self.beta1) * grad
        self._v[slot] = self.beta2 * self._v[slot] + (1.0 - self.beta2) * grad * grad
        m_hat = self._m[slot] / (1.0 - self.beta1**self._t)
        v_hat = self._v[slot] / (1.0 - self.beta2**self._t)
        return self.learning_rate * m_hat / (np.sqrt(v_hat) + self.eps)


def build_optimizer(
    kind: OptimizerKind,
    params: Sequence[Tensor],
    learning_rate: float,
    momentum: float = 0.9,
) -> Optimizer:
    if kind is OptimizerKind.SGD:
        return SGD(params, learning_rate)
    if kind is OptimizerKind.MOMENTUM:
        return Momentum(params, learning_rate, momentum)
    if kind is OptimizerKind.ADAM:
        return Adam(params, learning_rate)
    raise ConfigError(f"unknown optimizer {kind!r}", fields=["optimizer"])


def grad_norm(params: Sequence[Tensor]) -> float:
    """Global L2 norm over every populated gradient."""
    return math.sqrt(
        sum(float(np.sum(p.grad * p.grad)) for p in params if p.grad is not None)
    )


def scheduled_learning_rate(
    base: float,
    step: int,
    total_steps: int,
    schedule: LrSchedule = LrSchedule.CONSTANT,
    warmup_steps: int = 0,
    floor: float = 0.1,
) -> float:
    """
    Learning rate for 0-indexed ``step`` of a ``total_steps`` run.

    Warmup ramps linearly from ``base / warmup_steps`` to ``base``. The
    cosine schedule then decays to ``floor * base`` at the last step.

    Example:
        >>> scheduled_learning_rate(1.0, 0, 100, LrSchedule.COSINE, warmup_steps=10)
        0.1
    """
    if step < warmup_steps:
        return base * (step + 1) / warmup_steps
    if schedule is LrSchedule.CONSTANT:
        return base
    span = max(total_steps - warmup_steps - 1, 1)
    progress = min((step - warmup_steps) / span, 1.0)
    return base * (floor + (1.0 - floor) * 0.5 * (1.0 + math.cos(math.pi * progress)))
