"""Momentum SGD with coupled weight decay and the polynomial LR schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .tensor import Tensor


def poly_lr(lr0: float, it: int, max_iter: int, power: float) -> float:
    """``lr0 * (1 - it / max_iter) ** power``."""
    if it < 0 or it > max_iter:
        raise ValueError(f"iteration {it} outside [0, {max_iter}]")
    if max_iter == 0:
        return lr0
    return lr0 * (1.0 - it / max_iter) ** power


@dataclass
class OptimState:
    lr0: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0005
    power: float = 0.9
    max_iter: int = 1
    iter: int = 0
    buffers: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def lr(self) -> float:
        return poly_lr(self.lr0, self.iter, self.max_iter, self.power)


def sgd_step(params: Mapping[str, Tensor], state: OptimState) -> float:
    """One update ``v <- mu v + (g + wd theta); theta <- theta - lr v``.

    The learning rate comes from the schedule at ``state.iter``, which is then
    incremented. Returns the learning rate used.
    """
    if state.iter >= state.max_iter:
        raise RuntimeError(f"optimizer already at max_iter={state.max_iter}")
    lr = state.lr
    for name, p in params.items():
        if not p.requires_grad:
            continue
        if p.grad is None:
            raise RuntimeError(f"parameter {name} has no gradient")
        g = p.grad + state.weight_decay * p.data if state.weight_decay else p.grad
        v = state.buffers.get(name)
        v = g.copy() if v is None else state.momentum * v + g
        state.buffers[name] = v
        p.data = p.data - lr * v
    state.iter += 1
    return lr
