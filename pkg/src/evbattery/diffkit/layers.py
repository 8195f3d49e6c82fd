"""Dense, batch-norm and dropout layers, losses and the Gaussian latent helpers.

Every forward returns ``(output, cache)``; the matching backward consumes the
upstream gradient and the cache.  Leading dimensions of dense inputs are
flattened, so ``(N, T, D)`` sequences go through unchanged.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def _sigmoid_grad(y):
    return y * (1.0 - y)


ACTIVATIONS = {
    "identity": (lambda a: a, lambda y: np.ones_like(y)),
    "sigmoid": (expit, _sigmoid_grad),
    "relu": (lambda a: np.maximum(a, 0.0), lambda y: (y > 0).astype(y.dtype)),
    "tanh": (np.tanh, lambda y: 1.0 - y * y),
}


def init_dense(params, prefix: str, n_in: int, n_out: int, rng: np.random.Generator):
    """Glorot-uniform weights, zero bias."""
    bound = np.sqrt(6.0 / (n_in + n_out))
    params.add(f"{prefix}.W", rng.uniform(-bound, bound, (n_in, n_out)))
    params.add(f"{prefix}.b", np.zeros(n_out))


def dense_forward(x, W, b, activation: str = "identity"):
    x = np.asarray(x)
    if x.shape[-1] != W.shape[0] or b.shape != (W.shape[1],):
        raise ValueError(f"shape mismatch: x {x.shape}, W {W.shape}, b {b.shape}")
    act, _ = ACTIVATIONS[activation]
    y = act(x @ W + b)
    return y, (x, W, y, activation)


def dense_backward(dy, cache):
    """Return ``(dx, dW, db)``."""
    x, W, y, activation = cache
    da = dy * ACTIVATIONS[activation][1](y)
    x2 = x.reshape(-1, x.shape[-1])
    da2 = da.reshape(-1, da.shape[-1])
    return da @ W.T, x2.T @ da2, da2.sum(axis=0)


def init_batchnorm(params, prefix: str, n: int):
    params.add(f"{prefix}.gamma", np.ones(n))
    params.add(f"{prefix}.beta", np.zeros(n))


class BatchNormStats:
    """Running mean/variance used at inference time."""

    def __init__(self, n: int, momentum: float = 0.1):
        self.mean = np.zeros(n)
        self.var = np.ones(n)
        self.momentum = momentum


def batchnorm_forward(x, gamma, beta, stats: BatchNormStats, training: bool, eps: float = 1e-5):
    if training:
        mu = x.mean(axis=0)
        var = x.var(axis=0)
        m = stats.momentum
        stats.mean = (1 - m) * stats.mean + m * mu
        n = x.shape[0]
        unbiased = var * n / (n - 1) if n > 1 else var
        stats.var = (1 - m) * stats.var + m * unbiased
    else:
        mu, var = stats.mean, stats.var
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv
    return gamma * xhat + beta, (xhat, inv, gamma, training)


def batchnorm_backward(dy, cache):
    """Return ``(dx, dgamma, dbeta)``."""
    xhat, inv, gamma, training = cache
    dgamma = np.sum(dy * xhat, axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    if not training:
        return dxhat * inv, dgamma, dbeta
    n = dy.shape[0]
    dx = inv / n * (n * dxhat - dxhat.sum(axis=0) - xhat * np.sum(dxhat * xhat, axis=0))
    return dx, dgamma, dbeta


def dropout_forward(x, rate: float, rng: np.random.Generator | None, training: bool):
    """Inverted dropout; identity (and no RNG draw) outside training."""
    if not training or rate <= 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


def mse(pred, target):
    """Mean squared error over all elements and its gradient w.r.t. ``pred``."""
    diff = pred - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


def gaussian_kl(mu, logvar) -> float:
    """KL(N(mu, exp(logvar)) || N(0, I)) summed over all entries."""
    return float(-0.5 * np.sum(1.0 + logvar - mu * mu - np.exp(logvar)))


def gaussian_kl_backward(mu, logvar, scale: float = 1.0):
    """Gradients of ``scale * gaussian_kl`` w.r.t. ``mu`` and ``logvar``."""
    return scale * mu, scale * 0.5 * (np.exp(logvar) - 1.0)


def reparameterize(mu, logvar, noise):
    std = np.exp(0.5 * logvar)
    return mu + std * noise, (std, noise)


def reparameterize_backward(dz, cache):
    """Gradients w.r.t. ``mu`` and ``logvar``; the noise is treated as a constant."""
    std, noise = cache
    return dz, dz * 0.5 * std * noise
