"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The backend is chosen once at import time from ``PHONMAP_KERNELS``
(``numba`` or ``numpy``). When unset, numba is used if it imports.
Both backends are deterministic but not bit-identical to each other, so the
active backend is recorded in every training checkpoint.
"""

from __future__ import annotations

import os

import numpy as np

from . import _numpy

_requested = os.environ.get("PHONMAP_KERNELS", "").strip().lower()
if _requested not in ("", "numba", "numpy"):
    raise ImportError(f"PHONMAP_KERNELS must be 'numba' or 'numpy', got {_requested!r}")

NUMBA_AVAILABLE = True
try:
    from . import _numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    NUMBA_AVAILABLE = False
    _numba = None

if _requested == "numba" and not NUMBA_AVAILABLE:  # pragma: no cover
    raise ImportError("PHONMAP_KERNELS=numba but numba is not importable")

BACKEND = "numpy" if (_requested == "numpy" or not NUMBA_AVAILABLE) else "numba"
_impl = _numba if BACKEND == "numba" else _numpy

__all__ = ["BACKEND", "NUMBA_AVAILABLE", "ctc_forward_backward", "edit_distance", "backend_module"]


def backend_module(name: str):
    """Return the kernel module for ``name`` regardless of the active backend."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        if not NUMBA_AVAILABLE:
            raise ImportError("numba is not importable")
        return _numba
    raise ValueError(f"unknown kernel backend {name!r}")


def ctc_forward_backward(log_probs: np.ndarray, ext: np.ndarray) -> tuple[float, np.ndarray]:
    lp = np.ascontiguousarray(log_probs, dtype=np.float64)
    loss, grad = _impl.ctc_forward_backward(lp, np.ascontiguousarray(ext, dtype=np.int64))
    return float(loss), grad


def edit_distance(ref, hyp) -> int:
    """Levenshtein distance between two integer sequences."""
    r = np.asarray(ref, dtype=np.int64)
    h = np.asarray(hyp, dtype=np.int64)
    return _impl.edit_distance(r, h)
