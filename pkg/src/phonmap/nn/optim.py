from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, MutableMapping

import numpy as np

from ..errors import InvalidArgumentError, TrainingError


@dataclass
class OptimizerState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)

    def __post_init__(self):
        for key in ("lr", "beta1", "beta2", "eps"):
            if not getattr(self, key) > 0:
                raise InvalidArgumentError(f"adam {key} must be positive, got {getattr(self, key)}")


def adam_step(params: MutableMapping[str, np.ndarray], grads: Mapping[str, np.ndarray],
              state: OptimizerState) -> OptimizerState:
    """One bias-corrected Adam update, applied to ``params`` in place.

    All gradients are validated before any parameter moves, so a non-finite
    gradient leaves both parameters and state untouched.
    """
    for name, g in grads.items():
        if name not in params:
            raise InvalidArgumentError(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise InvalidArgumentError(
                f"gradient shape {g.shape} does not match parameter {name!r} shape {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}", param=name)

    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1 ** t
    c2 = 1.0 - state.beta2 ** t
    for name, g in grads.items():
        if name not in state.m:
            state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        params[name] -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state
