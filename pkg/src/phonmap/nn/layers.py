"""Forward and backward passes for the dense layers used by the ASR and PTN.

Activations are 2-D ``float64`` arrays laid out time-major (``T x C``).
Every ``*_forward`` returns ``(y, cache)`` and the matching ``*_backward``
consumes ``(dy, cache)``. Caches are plain tuples; nothing here keeps state
between calls except the running statistics passed to batch norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgumentError

TRAIN = "train"
INFER = "infer"


def _check_mode(mode: str) -> None:
    if mode not in (TRAIN, INFER):
        raise InvalidArgumentError(f"mode must be 'train' or 'infer', got {mode!r}")


# -- linear ------------------------------------------------------------------


def linear_forward(x, weight, bias):
    if x.ndim != 2 or weight.ndim != 2 or bias.ndim != 1 \
            or x.shape[1] != weight.shape[0] or weight.shape[1] != bias.shape[0]:
        raise InvalidArgumentError(
            f"linear: input shape {x.shape} does not conform to weight shape "
            f"{weight.shape} and bias shape {bias.shape}")
    y = x @ weight + bias
    return y, (x, weight)


def linear_backward(dy, cache):
    x, weight = cache
    return dy @ weight.T, x.T @ dy, dy.sum(axis=0)


def linear(x, weight, bias):
    return linear_forward(x, weight, bias)[0]


# -- time convolution ----------------------------------------------------------


def conv1d_time_forward(x, kernels, bias=None):
    """Same-length cross-correlation along time with zero padding.

    ``kernels`` has shape ``K x C_in x C_out``; ``K`` must be odd so that
    ``K // 2`` zero frames on each side keep the output length at ``T``.
    """
    if kernels.ndim != 3:
        raise InvalidArgumentError(f"conv1d_time: kernels must be K x C_in x C_out, got {kernels.shape}")
    K, c_in, c_out = kernels.shape
    if K % 2 == 0:
        raise InvalidArgumentError(f"conv1d_time: kernel width must be odd, got {K}")
    if x.ndim != 2 or x.shape[1] != c_in:
        raise InvalidArgumentError(f"conv1d_time: input shape {x.shape} does not match kernels {kernels.shape}")
    if bias is not None and bias.shape != (c_out,):
        raise InvalidArgumentError(f"conv1d_time: bias shape {bias.shape} does not match kernels {kernels.shape}")
    T = x.shape[0]
    pad = K // 2
    xp = np.zeros((T + 2 * pad, c_in))
    xp[pad:pad + T] = x
    cols = np.concatenate([xp[k:k + T] for k in range(K)], axis=1)  # T x (K*C_in)
    y = cols @ kernels.reshape(K * c_in, c_out)
    if bias is not None:
        y += bias
    return y, (cols, kernels, T, bias is not None)


def conv1d_time_backward(dy, cache):
    """Returns ``(dx, dkernels, dbias)``; ``dbias`` is None when no bias was used."""
    cols, kernels, T, has_bias = cache
    K, c_in, c_out = kernels.shape
    pad = K // 2
    dkernels = (cols.T @ dy).reshape(K, c_in, c_out)
    dcols = dy @ kernels.reshape(K * c_in, c_out).T
    dxp = np.zeros((T + 2 * pad, c_in))
    for k in range(K):
        dxp[k:k + T] += dcols[:, k * c_in:(k + 1) * c_in]
    dbias = dy.sum(axis=0) if has_bias else None
    return dxp[pad:pad + T], dkernels, dbias


def conv1d_time(x, kernels, bias=None):
    return conv1d_time_forward(x, kernels, bias)[0]


# -- batch norm over time ----------------------------------------------------


@dataclass
class RunningStats:
    mean: np.ndarray
    var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def fresh(cls, channels: int, momentum: float = 0.1) -> "RunningStats":
        return cls(np.zeros(channels), np.ones(channels), momentum)


def batchnorm_time_forward(x, gamma, beta, mode, running: RunningStats, eps=1e-5):
    """Normalize each channel over the time axis.

    Train mode uses the utterance's own statistics and folds them into
    ``running`` (in place); infer mode reads ``running`` only.
    """
    _check_mode(mode)
    if eps <= 0:
        raise InvalidArgumentError(f"batchnorm_time: eps must be positive, got {eps}")
    if x.ndim != 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise InvalidArgumentError(
            f"batchnorm_time: input shape {x.shape} does not match gamma {gamma.shape} / beta {beta.shape}")
    T = x.shape[0]
    if mode == INFER:
        inv_std = 1.0 / np.sqrt(running.var + eps)
        xhat = (x - running.mean) * inv_std
        return gamma * xhat + beta, None
    if T < 2:
        raise InvalidArgumentError(f"batchnorm_time: train mode needs at least 2 frames, got {T}")
    mu = x.mean(axis=0)
    var = x.var(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    m = running.momentum
    running.mean = (1.0 - m) * running.mean + m * mu
    running.var = (1.0 - m) * running.var + m * var * (T / (T - 1))
    return gamma * xhat + beta, (xhat, inv_std, gamma)


def batchnorm_time(x, gamma, beta, mode, running: RunningStats, eps=1e-5):
    return batchnorm_time_forward(x, gamma, beta, mode, running, eps)[0]


def batchnorm_time_backward(dy, cache):
    if cache is None:
        raise InvalidArgumentError("batchnorm_time: backward is only defined in train mode")
    xhat, inv_std, gamma = cache
    T = dy.shape[0]
    dgamma = (dy * xhat).sum(axis=0)
    dbeta = dy.sum(axis=0)
    dxhat = dy * gamma
    dx = (inv_std / T) * (T * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
    return dx, dgamma, dbeta


# -- elementwise ---------------------------------------------------------------


def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(dy, mask):
    return np.where(mask, dy, 0.0)


def relu(x):
    return relu_forward(x)[0]


def dropout_forward(x, rate, mode, rng=None):
    """Inverted dropout. Returns ``(y, mask)`` with ``mask`` None when inactive."""
    _check_mode(mode)
    if not 0.0 <= rate < 1.0:
        raise InvalidArgumentError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode == INFER or rate == 0.0:
        return x, None
    if rng is None:
        raise InvalidArgumentError("dropout in train mode needs a seeded generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dy, mask):
    return dy if mask is None else dy * mask


def dropout(x, rate, mode, rng=None):
    return dropout_forward(x, rate, mode, rng)[0]


# -- softmax -----------------------------------------------------------------


def log_softmax_rows(x):
    """Row-wise log-softmax via max subtraction.

    Row sums are taken over sorted values so the result does not depend on
    the column order, which keeps CTC exactly equivariant under relabeling.
    """
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.sort(np.exp(shifted), axis=1)
    return shifted - np.log(e.sum(axis=1, keepdims=True))


def softmax_rows(x):
    x = np.asarray(x, dtype=np.float64)
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sort(e, axis=1).sum(axis=1, keepdims=True)


def softmax_rows_backward(dy, y):
    """Gradient through ``y = softmax_rows(x)`` given ``dL/dy``."""
    return y * (dy - (dy * y).sum(axis=1, keepdims=True))
