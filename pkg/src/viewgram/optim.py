"""Momentum SGD with weight decay and elementwise gradient clipping.

Update convention: g' = g + weight_decay * theta, v <- momentum * v + g',
theta <- theta - learning_rate * v.  Clipping clamps each raw gradient
element to [-clip_bound, clip_bound] and is applied before the momentum
update so the velocity stays bounded.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .autodiff import Tensor
from .errors import ShapeMismatchError


@dataclass
class OptimizerState:
    learning_rate: float = 0.001
    momentum: float = 0.9
    weight_decay: float = 1e-4
    clip_bound: float = 0.01
    velocities: list[np.ndarray] = field(default_factory=list)

    def init_velocities(self, params: list[Tensor]) -> None:
        self.velocities = [np.zeros_like(p.data) for p in params]


def clip_gradients(grads, bound: float):
    """Clamp every gradient element to [-bound, bound], in place.

    Accepts arrays or Tensors with a populated .grad; entries that are None
    are skipped (no gradient means zero, which is already within bounds).
    """
    if bound <= 0:
        raise ValueError("clip bound must be positive")
    for g in grads:
        arr = g.grad if isinstance(g, Tensor) else g
        if arr is None:
            continue
        kernels.clip_inplace(arr.reshape(-1), bound)
    return grads


def sgd_step(params: list[Tensor], state: OptimizerState) -> None:
    """Apply one momentum-SGD update to params from their .grad fields.

    Gradients are expected to be clipped already.  A missing .grad counts
    as zero (the parameter was unreachable from the loss).
    """
    if not state.velocities:
        state.init_velocities(params)
    if len(state.velocities) != len(params):
        raise ShapeMismatchError(
            f"optimizer tracks {len(state.velocities)} parameters, got {len(params)}"
        )
    for p, v in zip(params, state.velocities):
        if v.shape != p.data.shape:
            raise ShapeMismatchError(
                f"velocity shape {v.shape} does not match parameter {p.data.shape}"
            )
        grad = p.grad
        if grad is None:
            grad = np.zeros_like(p.data)
        elif grad.shape != p.data.shape:
            raise ShapeMismatchError(
                f"gradient shape {grad.shape} does not match parameter {p.data.shape}"
            )
        kernels.sgd_update(
            p.data.reshape(-1),
            grad.reshape(-1),
            v.reshape(-1),
            state.learning_rate,
            state.momentum,
            state.weight_decay,
        )
