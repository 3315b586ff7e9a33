"""AdamW, global-norm clipping and learning-rate schedules."""

from __future__ import annotations

import math

import numpy as np


def global_norm(grads: dict) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))


def clip_grads(grads: dict, max_norm: float) -> tuple[dict, float]:
    norm = global_norm(grads)
    if max_norm and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


def lr_at(step: int, total: int, base: float, schedule: str = "cosine", warmup_frac: float = 0.1) -> float:
    """Learning rate for 0-based ``step``: linear warmup then cosine decay to zero."""
    if schedule == "constant":
        return base
    if schedule != "cosine":
        raise ValueError(f"unknown schedule {schedule!r}")
    warm = int(warmup_frac * total)
    if step < warm:
        return base * (step + 1) / warm
    span = max(1, total - warm)
    return 0.5 * base * (1.0 + math.cos(math.pi * min(1.0, (step - warm) / span)))


class AdamW:
    """Adam with decoupled weight decay applied to matrices only (not gains or biases)."""

    def __init__(self, params: dict, weight_decay: float = 0.0, betas=(0.9, 0.999), eps: float = 1e-8):
        self.wd = weight_decay
        self.b1, self.b2 = betas
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lr: float):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k, p in params.items():
            g = grads[k]
            m, v = self.m[k], self.v[k]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            if self.wd and p.ndim >= 2:
                p -= lr * self.wd * p
            p -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state_dict(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}
