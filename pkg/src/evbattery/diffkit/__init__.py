"""Small float64 differentiable toolkit: dense/GRU layers with explicit backward
passes, Gaussian latent helpers and Adam with cosine annealing."""

from .gru import gru_backward, gru_forward, gru_step, gru_weights, init_gru
from .layers import (ACTIVATIONS, BatchNormStats, batchnorm_backward, batchnorm_forward,
                     dense_backward, dense_forward, dropout_backward, dropout_forward,
                     gaussian_kl, gaussian_kl_backward, init_batchnorm, init_dense, mse,
                     reparameterize, reparameterize_backward)
from .optim import Adam, cosine_lr, minibatches, n_batches
from .params import ModelParams, config_hash, load_params, save_params

GRAD_CLIP = 5.0
BATCH_SIZE = 128

__all__ = [
    "ACTIVATIONS", "Adam", "BATCH_SIZE", "BatchNormStats", "GRAD_CLIP", "ModelParams",
    "batchnorm_backward", "batchnorm_forward", "config_hash", "cosine_lr", "dense_backward",
    "dense_forward", "dropout_backward", "dropout_forward", "gaussian_kl", "gaussian_kl_backward",
    "gru_backward", "gru_forward", "gru_step", "gru_weights", "init_batchnorm", "init_dense",
    "init_gru", "load_params", "minibatches", "mse", "n_batches", "reparameterize",
    "reparameterize_backward", "save_params",
]
