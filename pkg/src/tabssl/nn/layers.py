"""Stateless layer primitives with hand-written gradients.

Every function works on float64 arrays with the batch along axis 0.
"""

from __future__ import annotations

import numpy as np

from ..errors import ContractError, DimensionError


def dense_forward(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Affine map ``y = x @ weight.T + bias`` with ``weight`` stored (out, in)."""
    if x.ndim != 2 or weight.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise DimensionError(
            f"dense: input shape {x.shape} incompatible with weight shape {weight.shape}"
        )
    if bias.shape != (weight.shape[0],):
        raise DimensionError(
            f"dense: bias shape {bias.shape} incompatible with weight shape {weight.shape}"
        )
    return x @ weight.T + bias


def dense_backward(x, weight, dy):
    """Return ``(dweight, dbias, dx)``."""
    return dy.T @ x, dy.sum(axis=0), dy @ weight


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(x, dy):
    return dy * (x > 0)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def batchnorm_train(x, gamma, beta, eps):
    """Normalize with batch statistics (biased variance).

    Returns the output, the cache needed by :func:`batchnorm_backward`,
    and the batch mean and *biased* variance so the caller can update
    running statistics.
    """
    n = x.shape[0]
    if n < 2:
        raise ContractError("batch-norm in train mode needs a batch of at least 2 examples")
    mean = x.mean(axis=0)
    centered = x - mean
    var = (centered * centered).mean(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    return xhat * gamma + beta, (xhat, inv_std, gamma), mean, var


def batchnorm_eval(x, gamma, beta, running_mean, running_var, eps):
    return (x - running_mean) / np.sqrt(running_var + eps) * gamma + beta


def batchnorm_backward(cache, dy):
    """Return ``(dgamma, dbeta, dx)`` including the batch-statistic terms."""
    xhat, inv_std, gamma = cache
    n = dy.shape[0]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    dx = (inv_std / n) * (
        n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0)
    )
    return dgamma, dbeta, dx
