"""Adam optimizer with L2 weight decay and step learning-rate decay."""

from __future__ import annotations

from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from colorflow.autograd.tensor import Tensor
from colorflow.errors import ShapeError


@dataclass
class AdamState:
    """Optimizer state.

    Weight decay is coupled by default (``weight_decay * p`` is added to the
    gradient before the moment updates); set ``decoupled_weight_decay`` to
    shrink parameters directly instead.
    """

    base_lr: float = 1e-3
    weight_decay: float = 0.0
    decay_factor: float = 0.1
    decay_period: int = 10
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    decoupled_weight_decay: bool = False
    step: int = 0
    epoch: int = 0
    lr: float = field(default=-1.0)
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.lr < 0:
            self.lr = self.scheduled_lr(self.epoch)

    def scheduled_lr(self, epoch: int) -> float:
        """Learning rate in effect during ``epoch`` (0-based)."""
        return self.base_lr * self.decay_factor ** (epoch // self.decay_period)


def adam_step(
    params: Mapping[str, Tensor],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> None:
    """Apply one Adam update in place.

    Parameters without an entry in ``grads`` are left untouched but still share
    the step counter.
    """
    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    for name, p in params.items():
        grad = grads.get(name)
        if grad is None:
            continue
        if grad.shape != p.shape:
            raise ShapeError(f"gradient for {name} has shape {grad.shape}, parameter has {p.shape}")
        if state.weight_decay and not state.decoupled_weight_decay:
            grad = grad + state.weight_decay * p.data
        m = state.first_moment.get(name)
        if m is None:
            m = np.zeros_like(p.data)
            state.second_moment[name] = np.zeros_like(p.data)
        v = state.second_moment[name]
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * grad * grad
        state.first_moment[name] = m.astype(p.dtype)
        state.second_moment[name] = v.astype(p.dtype)
        update = state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        if state.weight_decay and state.decoupled_weight_decay:
            update = update + state.lr * state.weight_decay * p.data
        p.data -= update.astype(p.dtype)


class Adam:
    """Adam over a named parameter set."""

    def __init__(self, params: Mapping[str, Tensor], state: AdamState | None = None):
        self.params = dict(params)
        self.state = state or AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()

    def step(self) -> None:
        grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        adam_step(self.params, grads, self.state)

    def end_epoch(self) -> float:
        """Advance the epoch counter and return the learning rate for the next epoch."""
        self.state.epoch += 1
        self.state.lr = self.state.scheduled_lr(self.state.epoch)
        return self.state.lr
