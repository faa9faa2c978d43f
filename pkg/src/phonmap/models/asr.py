"""Pure-CNN acoustic model: projection, residual time-conv blocks, output projection.

Each residual block is ``x + relu(bn(conv_1(relu(bn(conv_K(x))))))``. The
convolutions carry no bias because the following batch norm would cancel it.
There is no temporal downsampling, so logits are frame-synchronous.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import nn
from ..errors import InvalidArgumentError, ModelKindError
from ..nn.layers import INFER, TRAIN, RunningStats


@dataclass(frozen=True)
class AsrArch:
    n_in: int
    n_out: int  # source symbols + blank
    hidden: int = 128
    blocks: int = 4
    kernel: int = 5

    def __post_init__(self):
        if min(self.n_in, self.n_out, self.hidden, self.kernel) < 1 or self.blocks < 0:
            raise InvalidArgumentError(f"invalid ASR architecture {self}")
        if self.n_out < 2:
            raise InvalidArgumentError("ASR output needs at least one symbol plus blank")
        if self.kernel % 2 == 0:
            raise InvalidArgumentError(f"ASR kernel width must be odd, got {self.kernel}")

    def param_shapes(self) -> dict:
        H = self.hidden
        shapes = {"in.weight": (self.n_in, H), "in.bias": (H,)}
        for b in range(self.blocks):
            p = f"block{b}."
            shapes[p + "conv1.kernel"] = (self.kernel, H, H)
            shapes[p + "bn1.gamma"] = (H,)
            shapes[p + "bn1.beta"] = (H,)
            shapes[p + "conv2.kernel"] = (1, H, H)
            shapes[p + "bn2.gamma"] = (H,)
            shapes[p + "bn2.beta"] = (H,)
        shapes["out.weight"] = (H, self.n_out)
        shapes["out.bias"] = (self.n_out,)
        return shapes

    def buffer_shapes(self) -> dict:
        shapes = {}
        for b in range(self.blocks):
            for bn in ("bn1", "bn2"):
                shapes[f"block{b}.{bn}.running_mean"] = (self.hidden,)
                shapes[f"block{b}.{bn}.running_var"] = (self.hidden,)
        return shapes


def init_asr_params(arch: AsrArch, rng) -> dict:
    params = {}
    for name, shape in arch.param_shapes().items():
        if name.endswith(("bias", "beta")):
            params[name] = np.zeros(shape)
        elif name.endswith("gamma"):
            params[name] = np.ones(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
    params["out.weight"] *= np.sqrt(0.5)  # no relu after the output projection
    return params


class CnnAsr:
    kind = "asr"

    def __init__(self, arch: AsrArch, params: dict | None = None, running: dict | None = None, rng=None):
        self.arch = arch
        if params is None:
            params = init_asr_params(arch, rng if rng is not None else np.random.default_rng(0))
        self.params = params
        if running is None:
            running = {}
            for b in range(arch.blocks):
                for bn in ("bn1", "bn2"):
                    running[f"block{b}.{bn}"] = RunningStats.fresh(arch.hidden)
        self.running = running

    def forward(self, x, mode=INFER):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.arch.n_in:
            raise InvalidArgumentError(
                f"ASR expects T x {self.arch.n_in} features, got shape {x.shape}")
        if x.shape[0] < 1:
            raise InvalidArgumentError("ASR input needs at least one frame")
        p = self.params
        h, c_in = nn.linear_forward(x, p["in.weight"], p["in.bias"])
        caches = []
        for b in range(self.arch.blocks):
            pre = f"block{b}."
            a, c1 = nn.conv1d_time_forward(h, p[pre + "conv1.kernel"])
            a, n1 = nn.batchnorm_time_forward(a, p[pre + "bn1.gamma"], p[pre + "bn1.beta"], mode,
                                              self.running[pre + "bn1"])
            a, r1 = nn.relu_forward(a)
            z, c2 = nn.conv1d_time_forward(a, p[pre + "conv2.kernel"])
            z, n2 = nn.batchnorm_time_forward(z, p[pre + "bn2.gamma"], p[pre + "bn2.beta"], mode,
                                              self.running[pre + "bn2"])
            z, r2 = nn.relu_forward(z)
            h = h + z
            caches.append((c1, n1, r1, c2, n2, r2))
        logits, c_out = nn.linear_forward(h, p["out.weight"], p["out.bias"])
        return logits, (mode, c_in, caches, c_out)

    def backward(self, dlogits, cache) -> dict:
        mode, c_in, caches, c_out = cache
        if mode != TRAIN:
            raise InvalidArgumentError("ASR backward requires a train-mode forward pass")
        g = {}
        dh, g["out.weight"], g["out.bias"] = nn.linear_backward(dlogits, c_out)
        for b in reversed(range(self.arch.blocks)):
            pre = f"block{b}."
            c1, n1, r1, c2, n2, r2 = caches[b]
            dz = nn.relu_backward(dh, r2)
            dz, g[pre + "bn2.gamma"], g[pre + "bn2.beta"] = nn.batchnorm_time_backward(dz, n2)
            da, g[pre + "conv2.kernel"], _ = nn.conv1d_time_backward(dz, c2)
            da = nn.relu_backward(da, r1)
            da, g[pre + "bn1.gamma"], g[pre + "bn1.beta"] = nn.batchnorm_time_backward(da, n1)
            dx, g[pre + "conv1.kernel"], _ = nn.conv1d_time_backward(da, c1)
            dh = dh + dx
        _, g["in.weight"], g["in.bias"] = nn.linear_backward(dh, c_in)
        return g

    def posteriorgram(self, x) -> np.ndarray:
        logits, _ = self.forward(x, INFER)
        return nn.softmax_rows(logits)

    # -- persistence -----------------------------------------------------------

    def to_checkpoint(self, inventory=None, metadata=None):
        from .checkpoint import Checkpoint

        tensors = {name: self.params[name] for name in self.arch.param_shapes()}
        for b in range(self.arch.blocks):
            for bn in ("bn1", "bn2"):
                st = self.running[f"block{b}.{bn}"]
                tensors[f"block{b}.{bn}.running_mean"] = st.mean
                tensors[f"block{b}.{bn}.running_var"] = st.var
        inventories = {"source": list(inventory.symbols)} if inventory is not None else {}
        return Checkpoint("asr", tensors, asdict(self.arch), inventories, dict(metadata or {}))

    @classmethod
    def from_checkpoint(cls, ckpt) -> "CnnAsr":
        if ckpt.kind != "asr":
            raise ModelKindError(f"expected an 'asr' checkpoint, got {ckpt.kind!r}")
        arch = AsrArch(**ckpt.arch)
        params = {name: ckpt.tensors[name].copy() for name in arch.param_shapes()}
        running = {}
        for b in range(arch.blocks):
            for bn in ("bn1", "bn2"):
                key = f"block{b}.{bn}"
                running[key] = RunningStats(ckpt.tensors[key + ".running_mean"].copy(),
                                            ckpt.tensors[key + ".running_var"].copy())
        return cls(arch, params, running)


def asr_forward(model: CnnAsr, features, mode=INFER) -> np.ndarray:
    return model.forward(features, mode)[0]
