"""Connectionist temporal classification: loss, gradient, oracle and decoding.

The blank always occupies the last column (index ``N`` for an inventory of
``N`` linguistic symbols).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import AlignmentInfeasibleError, InvalidArgumentError, ResourceLimitError
from .nn.layers import log_softmax_rows

BRUTE_FORCE_LIMIT = 10**7


@dataclass(frozen=True)
class CtcResult:
    loss: float
    grad: np.ndarray  # d loss / d logits, T x (N + 1)


def validate_labels(labels, n_symbols: int) -> np.ndarray:
    ids = np.asarray(labels, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise InvalidArgumentError("label sequence must be a nonempty 1-D sequence")
    if ids.min() < 0 or ids.max() >= n_symbols:
        raise InvalidArgumentError(
            f"label ids must lie in [0, {n_symbols}) (blank {n_symbols} excluded), got {ids.tolist()}")
    return ids


def min_frames(labels) -> int:
    """Fewest frames that can carry ``labels``: one per label plus a blank between repeats."""
    ids = np.asarray(labels)
    return int(len(ids) + np.count_nonzero(ids[1:] == ids[:-1]))


def is_feasible(n_frames: int, labels) -> bool:
    return n_frames >= min_frames(labels)


def expand_with_blanks(labels, blank: int) -> np.ndarray:
    ext = np.full(2 * len(labels) + 1, blank, dtype=np.int64)
    ext[1::2] = labels
    return ext


def ctc_loss(logits, labels) -> CtcResult:
    """Negative log-likelihood of ``labels`` under per-frame ``logits``.

    ``logits`` is ``T x (N + 1)`` before softmax. Raises
    AlignmentInfeasibleError when ``T`` is shorter than ``min_frames(labels)``.
    """
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] < 2:
        raise InvalidArgumentError(f"logits must be T x (N+1) with N >= 1, got shape {logits.shape}")
    T, V = logits.shape
    ids = validate_labels(labels, V - 1)
    need = min_frames(ids)
    if T < need:
        raise AlignmentInfeasibleError(f"{T} frames cannot align {len(ids)} labels (need {need})")
    log_probs = log_softmax_rows(logits)
    loss, grad = kernels.ctc_forward_backward(log_probs, expand_with_blanks(ids, V - 1))
    return CtcResult(loss, grad)


def ctc_brute_force(probs, labels) -> float:
    """Reference CTC loss by enumerating every length-``T`` path.

    Raises ResourceLimitError when ``(N + 1) ** T`` exceeds ``BRUTE_FORCE_LIMIT``.
    """
    probs = np.asarray(probs, dtype=np.float64)
    T, V = probs.shape
    blank = V - 1
    ids = validate_labels(labels, blank)
    if V ** T > BRUTE_FORCE_LIMIT:
        raise ResourceLimitError(f"{V}^{T} paths exceeds the enumeration limit {BRUTE_FORCE_LIMIT}")
    L = len(ids)
    total = 0.0
    n_paths = V ** T
    place = V ** np.arange(T - 1, -1, -1, dtype=np.int64)
    for start in range(0, n_paths, 1 << 18):
        codes = np.arange(start, min(start + (1 << 18), n_paths), dtype=np.int64)
        block = (codes[:, None] // place) % V
        prev = np.concatenate([np.full((len(block), 1), -1), block[:, :-1]], axis=1)
        keep = (block != blank) & (block != prev)
        pos = np.cumsum(keep, axis=1) - 1
        lookup = ids[np.clip(pos, 0, L - 1)]
        ok = (keep.sum(axis=1) == L) & np.all(~keep | (lookup == block), axis=1)
        if ok.any():
            good = block[ok]
            total += probs[np.arange(T), good].prod(axis=1).sum()
    return float(-np.log(total)) if total > 0 else float("inf")


def greedy_decode(posteriorgram) -> list[int]:
    """Per-frame argmax, collapse repeats, drop blanks (last column)."""
    post = np.asarray(posteriorgram)
    blank = post.shape[1] - 1
    best = post.argmax(axis=1)
    out = []
    prev = -1
    for b in best.tolist():
        if b != prev and b != blank:
            out.append(b)
        prev = b
    return out
