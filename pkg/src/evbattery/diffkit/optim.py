"""Adam with a cosine-annealed learning rate, plus minibatch helpers."""

from __future__ import annotations

import math

import numpy as np

from .params import ModelParams


def cosine_lr(base_lr: float, step: int, period: int | None) -> float:
    """``base * 0.5 * (1 + cos(pi * step / period))``, clamped to 0 past the period."""
    if period is None:
        return base_lr
    if period <= 0:
        raise ValueError("period must be positive")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * min(step, period) / period))


class Adam:
    def __init__(self, params: ModelParams, lr: float = 1e-3, period: int | None = None,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.base_lr = lr
        self.period = period
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(params[k]) for k in params}
        self.v = {k: np.zeros_like(params[k]) for k in params}

    @property
    def lr(self) -> float:
        return cosine_lr(self.base_lr, self.step_count, self.period)

    def step(self) -> None:
        lr = self.lr
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for k in self.params:
            g = self.params.grad(k)
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            self.params[k][...] -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled index batches covering ``range(n)`` once."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def n_batches(n: int, batch_size: int) -> int:
    return -(-n // batch_size)
