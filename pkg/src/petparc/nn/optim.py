"""Adam with L2-coupled weight decay, and the cosine annealing schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .autograd import Tensor


@dataclass
class OptimizerState:
    lr: float = 8.5e-4
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, Tensor], state: OptimizerState, lr_t: float | None = None) -> None:
    """One in-place Adam update from the ``.grad`` of each parameter.

    Weight decay is added to the gradient (``g + decay * theta``) before the
    moment updates.  Parameters without a gradient are treated as having a
    zero gradient.
    """
    lr = state.lr if lr_t is None else lr_t
    state.step += 1
    t = state.step
    bc1 = 1 - state.beta1**t
    bc2 = 1 - state.beta2**t
    for name, p in params.items():
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if state.weight_decay:
            g = g + state.weight_decay * p.data
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * (g * g)
        denom = np.sqrt(v) / math.sqrt(bc2) + state.eps
        p.data -= (lr / bc1) * m / denom


def cosine_lr(step: int, total_steps: int, base_lr: float) -> float:
    if total_steps <= 0:
        return base_lr
    step = min(max(step, 0), total_steps)
    return max(0.0, base_lr * 0.5 * (1 + math.cos(math.pi * step / total_steps)))
