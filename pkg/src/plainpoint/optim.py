"""AdamW with global gradient-norm clipping, and the warmup + cosine schedule."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .nn import ParameterStore


@dataclass
class OptimizerState:
    base_lr: float = 5e-4
    weight_decay: float = 0.01
    clip_norm: float | None = 0.1
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    step: int = 0
    exp_avg: dict[str, np.ndarray] = field(default_factory=dict)
    exp_avg_sq: dict[str, np.ndarray] = field(default_factory=dict)


def global_grad_norm(store: ParameterStore) -> float:
    total = 0.0
    for name, p in store.named_parameters():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
        total += float(np.sum(p.grad * p.grad))
    return math.sqrt(total)


def clip_grad_norm(store: ParameterStore, max_norm: float) -> float:
    """Rescale all gradients in place so their joint L2 norm is at most ``max_norm``.

    Returns the norm before clipping.
    """
    norm = global_grad_norm(store)
    if norm > max_norm:
        scale = max_norm / norm
        for _, p in store.named_parameters():
            p.grad = p.grad * scale
    return norm


def adamw_step(store: ParameterStore, state: OptimizerState, lr: float) -> None:
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for name, p in store.named_parameters():
        if p.grad is None:
            raise ValueError(f"parameter {name!r} has no gradient")
    if state.clip_norm is not None:
        clip_grad_norm(store, state.clip_norm)
    state.step += 1
    b1, b2 = state.betas
    bias1 = 1.0 - b1**state.step
    bias2 = 1.0 - b2**state.step
    for name, p in store.named_parameters():
        m = state.exp_avg.setdefault(name, np.zeros_like(p.data))
        v = state.exp_avg_sq.setdefault(name, np.zeros_like(p.data))
        g = p.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        if state.weight_decay:
            p.data *= 1.0 - lr * state.weight_decay
        p.data -= lr * (m / bias1) / (np.sqrt(v / bias2) + state.eps)


def lr_schedule(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warmup from 0 to ``base_lr``, then cosine decay to 0 at ``total_steps``."""
    step = min(max(step, 0), total_steps)
    if warmup_steps > 0 and step < warmup_steps:
        return base_lr * step / warmup_steps
    span = total_steps - warmup_steps
    if span <= 0:
        return base_lr
    progress = (step - warmup_steps) / span
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * progress))
