"""Compiled inner loops. Same contracts as ``_numpy``; selected in ``kernels``."""

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def _lae(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


@njit(cache=True)
def ctc_forward_backward(log_probs, ext):
    """Log-space CTC recursions over the blank-interleaved label sequence ``ext``.

    Returns ``(loss, grad)`` where ``grad`` is the gradient of the loss with
    respect to the pre-softmax logits that produced ``log_probs``.
    """
    T, V = log_probs.shape
    S = ext.shape[0]
    blank = V - 1
    alpha = np.full((T, S), NEG_INF)
    beta = np.full((T, S), NEG_INF)

    alpha[0, 0] = log_probs[0, ext[0]]
    if S > 1:
        alpha[0, 1] = log_probs[0, ext[1]]
    for t in range(1, T):
        for s in range(S):
            a = alpha[t - 1, s]
            if s >= 1:
                a = _lae(a, alpha[t - 1, s - 1])
            if s >= 2 and ext[s] != blank and ext[s] != ext[s - 2]:
                a = _lae(a, alpha[t - 1, s - 2])
            alpha[t, s] = a + log_probs[t, ext[s]]

    # beta includes the emission at t, so alpha * beta double-counts it
    beta[T - 1, S - 1] = log_probs[T - 1, ext[S - 1]]
    if S > 1:
        beta[T - 1, S - 2] = log_probs[T - 1, ext[S - 2]]
    for t in range(T - 2, -1, -1):
        for s in range(S):
            b = beta[t + 1, s]
            if s + 1 < S:
                b = _lae(b, beta[t + 1, s + 1])
            if s + 2 < S and ext[s + 2] != blank and ext[s + 2] != ext[s]:
                b = _lae(b, beta[t + 1, s + 2])
            beta[t, s] = b + log_probs[t, ext[s]]

    log_z = alpha[T - 1, S - 1]
    if S > 1:
        log_z = _lae(log_z, alpha[T - 1, S - 2])

    grad = np.exp(log_probs)
    occ = np.empty(S)
    for t in range(T):
        row_z = NEG_INF
        for s in range(S):
            occ[s] = alpha[t, s] + beta[t, s] - log_probs[t, ext[s]]
            row_z = _lae(row_z, occ[s])
        for s in range(S):
            grad[t, ext[s]] -= math.exp(occ[s] - row_z)
    return -log_z, grad


@njit(cache=True)
def edit_distance(ref, hyp):
    n = ref.shape[0]
    m = hyp.shape[0]
    prev = np.arange(m + 1)
    cur = np.empty(m + 1, dtype=prev.dtype)
    for i in range(1, n + 1):
        cur[0] = i
        for j in range(1, m + 1):
            cost = 0 if ref[i - 1] == hyp[j - 1] else 1
            best = prev[j - 1] + cost
            if prev[j] + 1 < best:
                best = prev[j] + 1
            if cur[j - 1] + 1 < best:
                best = cur[j - 1] + 1
            cur[j] = best
        prev, cur = cur, prev
    return int(prev[m])
