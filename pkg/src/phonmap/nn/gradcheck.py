from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from ..errors import InvalidStateError

LossFn = Callable[[], tuple[float, Mapping[str, np.ndarray]]]


def relative_error(analytic, numeric, floor=1e-8):
    """Elementwise ``|a - n| / max(|a|, |n|, floor)``."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def grad_check(fn: LossFn, params: Mapping[str, np.ndarray], eps: float = 1e-5,
               max_elements: int = 10_000, floor: float = 1e-8, seed: int = 0,
               details: dict | None = None) -> float:
    """Compare analytic gradients against central finite differences.

    ``fn`` takes no arguments, reads the arrays in ``params`` (which are
    perturbed in place and restored) and returns ``(loss, grads)`` with
    ``grads`` keyed like ``params``. Returns the maximum elementwise relative
    error; parameters with more than ``max_elements`` entries are checked on a
    fixed random subsample.

    Raises InvalidStateError if two evaluations at the same point disagree,
    e.g. because dropout is still active.
    """
    loss0, grads = fn()
    loss_again, _ = fn()
    if loss0 != loss_again:
        raise InvalidStateError(
            "grad_check needs a deterministic loss; disable dropout or other sampling")
    grads = {k: np.array(v, dtype=np.float64, copy=True) for k, v in grads.items()}

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, value in params.items():
        if not value.flags.c_contiguous:
            raise InvalidStateError(f"parameter {name!r} must be contiguous to be perturbed in place")
        flat = value.reshape(-1)
        n = flat.size
        idx = np.arange(n) if n <= max_elements else np.sort(rng.choice(n, max_elements, replace=False))
        analytic = grads[name].reshape(-1)[idx]
        numeric = np.empty(len(idx))
        for out, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            lp, _ = fn()
            flat[i] = orig - eps
            lm, _ = fn()
            flat[i] = orig
            numeric[out] = (lp - lm) / (2.0 * eps)
        err = float(relative_error(analytic, numeric, floor).max()) if len(idx) else 0.0
        if details is not None:
            details[name] = err
        worst = max(worst, err)
    return worst
