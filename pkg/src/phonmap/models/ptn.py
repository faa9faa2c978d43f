"""Phonetic transformation network: a per-frame MLP from source to target posteriors."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import nn
from ..errors import InvalidArgumentError, ModelKindError
from ..nn.layers import INFER


@dataclass(frozen=True)
class PtnArch:
    n_in: int  # source symbols + blank
    n_out: int  # target symbols + blank
    hidden: int = 128
    dropout: float = 0.4

    def __post_init__(self):
        if min(self.n_in, self.n_out) < 2 or self.hidden < 1:
            raise InvalidArgumentError(f"invalid PTN architecture {self}")
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidArgumentError(f"PTN dropout must lie in [0, 1), got {self.dropout}")

    def param_shapes(self) -> dict:
        H = self.hidden
        return {
            "fc1.weight": (self.n_in, H), "fc1.bias": (H,),
            "fc2.weight": (H, H), "fc2.bias": (H,),
            "fc3.weight": (H, self.n_out), "fc3.bias": (self.n_out,),
        }


class Ptn:
    kind = "ptn"

    def __init__(self, arch: PtnArch, params: dict | None = None, rng=None):
        self.arch = arch
        if params is None:
            rng = rng if rng is not None else np.random.default_rng(0)
            params = {}
            for name, shape in arch.param_shapes().items():
                if name.endswith("bias"):
                    params[name] = np.zeros(shape)
                else:
                    params[name] = rng.normal(0.0, np.sqrt(2.0 / shape[0]), size=shape)
        self.params = params

    def forward(self, p_src, mode=INFER, rng=None):
        """Target logits for each frame of ``p_src``; softmax them for ``p_tgt``."""
        x = np.asarray(p_src, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.arch.n_in:
            raise InvalidArgumentError(
                f"PTN expects rows of width {self.arch.n_in}, got shape {x.shape}")
        p = self.params
        h, c1 = nn.linear_forward(x, p["fc1.weight"], p["fc1.bias"])
        h, r1 = nn.relu_forward(h)
        h, d1 = nn.dropout_forward(h, self.arch.dropout, mode, rng)
        h, c2 = nn.linear_forward(h, p["fc2.weight"], p["fc2.bias"])
        h, r2 = nn.relu_forward(h)
        h, d2 = nn.dropout_forward(h, self.arch.dropout, mode, rng)
        logits, c3 = nn.linear_forward(h, p["fc3.weight"], p["fc3.bias"])
        return logits, (c1, r1, d1, c2, r2, d2, c3)

    def backward(self, dlogits, cache, want_input_grad=False):
        c1, r1, d1, c2, r2, d2, c3 = cache
        g = {}
        dh, g["fc3.weight"], g["fc3.bias"] = nn.linear_backward(dlogits, c3)
        dh = nn.relu_backward(nn.dropout_backward(dh, d2), r2)
        dh, g["fc2.weight"], g["fc2.bias"] = nn.linear_backward(dh, c2)
        dh = nn.relu_backward(nn.dropout_backward(dh, d1), r1)
        dx, g["fc1.weight"], g["fc1.bias"] = nn.linear_backward(dh, c1)
        return (g, dx) if want_input_grad else g

    def to_checkpoint(self, src_inventory=None, tgt_inventory=None, metadata=None):
        from .checkpoint import Checkpoint

        inventories = {}
        if src_inventory is not None:
            inventories["source"] = list(src_inventory.symbols)
        if tgt_inventory is not None:
            inventories["target"] = list(tgt_inventory.symbols)
        tensors = {name: self.params[name] for name in self.arch.param_shapes()}
        return Checkpoint("ptn", tensors, asdict(self.arch), inventories, dict(metadata or {}))

    @classmethod
    def from_checkpoint(cls, ckpt) -> "Ptn":
        if ckpt.kind != "ptn":
            raise ModelKindError(f"expected a 'ptn' checkpoint, got {ckpt.kind!r}")
        arch = PtnArch(**ckpt.arch)
        return cls(arch, {name: ckpt.tensors[name].copy() for name in arch.param_shapes()})


def ptn_forward(ptn: Ptn, posteriorgram, mode=INFER, rng=None) -> np.ndarray:
    """Map a source posteriorgram to a target posteriorgram, frame by frame."""
    logits, _ = ptn.forward(posteriorgram, mode, rng)
    return nn.softmax_rows(logits)
