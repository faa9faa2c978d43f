"""Finite-difference checks for every layer and for the frozen ASR + PTN + CTC stack.

Each check builds a small deterministic problem, runs ``grad_check`` and
reports the worst relative error against its tolerance. Layer losses are
``sum(y * R)`` for a fixed random ``R`` so every output element contributes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .ctc import ctc_loss
from .models.asr import AsrArch, CnnAsr
from .models.ptn import Ptn, PtnArch
from .models.training import composed_loss_and_grad
from .nn.layers import INFER, TRAIN, RunningStats

SMOOTH_TOL = 1e-6
BATCHNORM_TOL = 1e-5
STACK_TOL = 1e-4


@dataclass
class CheckResult:
    name: str
    max_rel_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def _projected(forward, R):
    """Wrap ``forward() -> (y, backward(dy) -> grads)`` into a scalar loss."""
    def fn():
        y, back = forward()
        return float(np.sum(y * R)), back(R)
    return fn


def check_linear(rng):
    p = {"x": rng.normal(size=(6, 4)), "w": rng.normal(size=(4, 3)), "b": rng.normal(size=3)}
    R = rng.normal(size=(6, 3))

    def fwd():
        y, c = nn.linear_forward(p["x"], p["w"], p["b"])
        return y, lambda dy: dict(zip(("x", "w", "b"), nn.linear_backward(dy, c)))
    return nn.grad_check(_projected(fwd, R), p)


def check_conv(rng, K):
    p = {"x": rng.normal(size=(9, 3)), "k": rng.normal(size=(K, 3, 4)), "b": rng.normal(size=4)}
    R = rng.normal(size=(9, 4))

    def fwd():
        y, c = nn.conv1d_time_forward(p["x"], p["k"], p["b"])
        return y, lambda dy: dict(zip(("x", "k", "b"), nn.conv1d_time_backward(dy, c)))
    return nn.grad_check(_projected(fwd, R), p)


def check_batchnorm(rng, mode):
    p = {"x": rng.normal(1.0, 2.0, size=(10, 5)), "g": rng.normal(1.0, 0.2, size=5), "b": rng.normal(size=5)}
    R = rng.normal(size=(10, 5))
    frozen = RunningStats(rng.normal(size=5), rng.uniform(0.5, 2.0, size=5))

    def fwd():
        running = RunningStats(frozen.mean.copy(), frozen.var.copy())
        y, c = nn.batchnorm_time_forward(p["x"], p["g"], p["b"], mode, running)
        if mode == TRAIN:
            return y, lambda dy: dict(zip(("x", "g", "b"), nn.batchnorm_time_backward(dy, c)))
        # inference mode is affine in x with frozen statistics
        scale = p["g"] / np.sqrt(frozen.var + 1e-5)
        xhat = (p["x"] - frozen.mean) / np.sqrt(frozen.var + 1e-5)
        return y, lambda dy: {"x": dy * scale, "g": (dy * xhat).sum(0), "b": dy.sum(0)}
    return nn.grad_check(_projected(fwd, R), p)


def check_relu(rng):
    x = rng.normal(size=(7, 4))
    x += np.where(x >= 0, 0.1, -0.1)  # keep finite differences away from the kink
    p = {"x": x}
    R = rng.normal(size=(7, 4))

    def fwd():
        y, m = nn.relu_forward(p["x"])
        return y, lambda dy: {"x": nn.relu_backward(dy, m)}
    return nn.grad_check(_projected(fwd, R), p)


def check_dropout(rng):
    p = {"x": rng.normal(size=(7, 4))}
    R = rng.normal(size=(7, 4))

    def fwd():
        # same mask on every call
        y, m = nn.dropout_forward(p["x"], 0.4, TRAIN, np.random.default_rng(3))
        return y, lambda dy: {"x": nn.dropout_backward(dy, m)}
    return nn.grad_check(_projected(fwd, R), p)


def check_softmax(rng):
    p = {"x": rng.normal(size=(5, 6))}
    R = rng.normal(size=(5, 6))

    def fwd():
        y = nn.softmax_rows(p["x"])
        return y, lambda dy: {"x": nn.softmax_rows_backward(dy, y)}
    return nn.grad_check(_projected(fwd, R), p)


def check_ctc(rng):
    p = {"logits": rng.normal(size=(8, 4))}
    labels = [0, 2, 2, 1]

    def fn():
        res = ctc_loss(p["logits"], labels)
        return res.loss, {"logits": res.grad}
    return nn.grad_check(fn, p)


def check_asr(rng):
    arch = AsrArch(n_in=3, n_out=4, hidden=6, blocks=2, kernel=3)
    model = CnnAsr(arch, rng=rng)
    x = rng.normal(size=(10, 3))
    labels = [0, 1, 2]

    def fn():
        running = {k: RunningStats(v.mean.copy(), v.var.copy()) for k, v in model.running.items()}
        saved, model.running = model.running, running
        try:
            logits, cache = model.forward(x, TRAIN)
            res = ctc_loss(logits, labels)
            return res.loss, model.backward(res.grad, cache)
        finally:
            model.running = saved
    return nn.grad_check(fn, model.params)


def check_stack(rng):
    """Frozen ASR (inference mode) -> PTN (dropout off) -> CTC on a 10-frame utterance."""
    asr = CnnAsr(AsrArch(n_in=4, n_out=5, hidden=8, blocks=2, kernel=5), rng=rng)
    # give the frozen statistics non-trivial values
    for st in asr.running.values():
        st.mean[:] = rng.normal(0.0, 0.3, size=st.mean.shape)
        st.var[:] = rng.uniform(0.5, 2.0, size=st.var.shape)
    ptn = Ptn(PtnArch(n_in=5, n_out=4, hidden=8, dropout=0.4), rng=rng)
    x = rng.normal(size=(10, 4))
    labels = [0, 1, 1, 2]
    before = {k: v.copy() for k, v in asr.params.items()}
    err = nn.grad_check(lambda: composed_loss_and_grad(asr, ptn, x, labels), ptn.params)
    assert all(np.array_equal(before[k], asr.params[k]) for k in before)
    return err


def run_suite(seed: int = 0) -> list:
    ss = np.random.SeedSequence(seed).spawn(12)
    r = [np.random.default_rng(s) for s in ss]
    return [
        CheckResult("linear", check_linear(r[0]), SMOOTH_TOL),
        CheckResult("conv1d_time_k3", check_conv(r[1], 3), SMOOTH_TOL),
        CheckResult("conv1d_time_k1", check_conv(r[2], 1), SMOOTH_TOL),
        CheckResult("batchnorm_train", check_batchnorm(r[3], TRAIN), BATCHNORM_TOL),
        CheckResult("batchnorm_infer", check_batchnorm(r[4], INFER), BATCHNORM_TOL),
        CheckResult("relu", check_relu(r[5]), SMOOTH_TOL),
        CheckResult("dropout", check_dropout(r[6]), SMOOTH_TOL),
        CheckResult("softmax", check_softmax(r[7]), SMOOTH_TOL),
        CheckResult("ctc", check_ctc(r[8]), SMOOTH_TOL),
        CheckResult("asr_train_mode", check_asr(r[9]), BATCHNORM_TOL),
        CheckResult("asr_ptn_ctc_stack", check_stack(r[10]), STACK_TOL),
    ]
