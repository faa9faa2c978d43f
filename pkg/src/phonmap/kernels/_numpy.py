"""Vectorized numpy versions of the compiled kernels."""

import numpy as np


def ctc_forward_backward(log_probs, ext):
    T, V = log_probs.shape
    S = ext.shape[0]
    blank = V - 1
    emit = log_probs[:, ext]  # T x S

    skip = np.zeros(S, dtype=bool)
    if S > 2:
        skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    alpha = np.full((T, S), -np.inf)
    alpha[0, :2] = emit[0, :2]
    for t in range(1, T):
        prev = alpha[t - 1]
        a = prev.copy()
        a[1:] = np.logaddexp(a[1:], prev[:-1])
        a[2:] = np.where(skip[2:], np.logaddexp(a[2:], prev[:-2]), a[2:])
        alpha[t] = a + emit[t]

    beta = np.full((T, S), -np.inf)
    beta[T - 1, -2:] = emit[T - 1, -2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        b = nxt.copy()
        b[:-1] = np.logaddexp(b[:-1], nxt[1:])
        b[:-2] = np.where(skip[2:], np.logaddexp(b[:-2], nxt[2:]), b[:-2])
        beta[t] = b + emit[t]

    log_z = np.logaddexp.reduce(alpha[T - 1, -2:])
    occ = alpha + beta - emit
    row_z = np.logaddexp.reduce(occ, axis=1, keepdims=True)
    gamma = np.exp(occ - row_z)

    onehot = np.zeros((S, V))
    onehot[np.arange(S), ext] = 1.0
    grad = np.exp(log_probs) - gamma @ onehot
    return -log_z, grad


def edit_distance(ref, hyp):
    n, m = len(ref), len(hyp)
    steps = np.arange(m + 1)
    prev = steps.copy()
    for i in range(1, n + 1):
        sub = prev[:-1] + (hyp != ref[i - 1])
        tmp = np.empty(m + 1, dtype=np.int64)
        tmp[0] = i
        tmp[1:] = np.minimum(prev[1:] + 1, sub)
        # insertion chain: cur[j] = min_k tmp[k] + (j - k)
        prev = np.minimum.accumulate(tmp - steps) + steps
    return int(prev[m])
