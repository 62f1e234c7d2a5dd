from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

LR_MAX = 1e-3
LR_MIN = 1e-5
RESTART_PERIOD = 25
WEIGHT_DECAY = 1e-5


@dataclass
class OptimState:
    """AdamW moments and step counter, keyed by parameter name."""

    lr: float = LR_MAX
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = WEIGHT_DECAY
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adamw_step(params: dict[str, Tensor], state: OptimState, lr: float | None = None) -> None:
    """One in-place AdamW update: decoupled decay ``p *= 1 - lr*wd``, then bias-corrected Adam."""
    lr = state.lr if lr is None else lr
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        if state.weight_decay:
            p.data *= 1.0 - lr * state.weight_decay
        p.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)


def cosine_lr(epoch: float, lr_max: float = LR_MAX, lr_min: float = LR_MIN, period: int = RESTART_PERIOD) -> float:
    """Cosine annealing from ``lr_max`` to ``lr_min`` with a warm restart every ``period`` epochs.

    Fractional epochs are accepted.
    """
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    phase = math.fmod(epoch, period) / period
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * phase))
