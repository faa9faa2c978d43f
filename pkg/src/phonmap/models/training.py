"""Two-stage training: CTC acoustic model on the source language, then a PTN
on the target language on top of the frozen acoustic model.

Training is one utterance per update. Both loops keep the parameters with
the lowest mean development loss and stop after ``patience`` epochs without
improvement.
"""

from __future__ import annotations

import copy
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import kernels, nn
from ..ctc import ctc_loss, greedy_decode, is_feasible
from ..errors import IntegrityError, InvalidArgumentError, TrainingError
from ..evaluation import symbol_error_rate
from ..inventory import SymbolInventory
from ..nn.layers import INFER, TRAIN
from .asr import AsrArch, CnnAsr
from .checkpoint import Checkpoint, file_digest, load_checkpoint
from .ptn import Ptn, PtnArch

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AsrTrainConfig:
    hidden: int = 128
    blocks: int = 4
    kernel: int = 5
    epochs: int = 50
    patience: int = 10
    lr: float = 1e-3
    seed: int = 0


@dataclass(frozen=True)
class PtnTrainConfig:
    hidden: int = 128
    dropout: float = 0.4
    epochs: int = 100
    patience: int = 10
    lr: float = 1e-3
    seed: int = 0


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    log: list = field(default_factory=list)
    best_epoch: int = 0
    skipped: int = 0


def _feasible(corpus, what):
    if len(corpus) == 0:
        raise InvalidArgumentError(f"{what} corpus is empty")
    keep = [u for u in corpus if len(u.labels) and is_feasible(u.n_frames, u.labels)]
    skipped = len(corpus) - len(keep)
    if skipped:
        log.warning("%s: skipping %d utterance(s) too short for their labels", what, skipped)
    return keep, skipped


def _run_epochs(n_train, epochs, patience, step_fn, dev_fn, snapshot_fn, order_rng):
    """Shared epoch loop. ``dev_fn`` returns ``(dev_loss, dev_ser)``."""
    history = []
    best = (np.inf, 0, None)
    stale = 0
    for epoch in range(1, epochs + 1):
        order = order_rng.permutation(n_train)
        total = 0.0
        for i in order:
            total += step_fn(int(i))
        dev_loss, dev_ser = dev_fn()
        history.append({"epoch": epoch, "train_loss": total / n_train, "dev_loss": dev_loss, "dev_ser": dev_ser})
        log.info("epoch %d train %.4f dev %.4f ser %.4f", epoch, total / n_train, dev_loss, dev_ser)
        if dev_loss < best[0]:
            best = (dev_loss, epoch, snapshot_fn())
            stale = 0
        else:
            stale += 1
            if stale >= patience:
                break
    return history, best


def train_asr(train_corpus, dev_corpus, config: AsrTrainConfig = AsrTrainConfig(),
              metadata: dict | None = None) -> TrainResult:
    """Stage 1: fit the CNN acoustic model to source-language transcripts with CTC."""
    train, skipped = _feasible(train_corpus, "source train")
    dev, dev_skipped = _feasible(dev_corpus, "source dev")
    if not train:
        raise TrainingError("every source training utterance is too short for its labels")
    if not dev:
        raise TrainingError("every source dev utterance is too short for its labels")
    inventory = train_corpus.inventory
    arch = AsrArch(train[0].features.shape[1], inventory.width, config.hidden, config.blocks, config.kernel)
    init_rng, order_rng = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(2)]
    model = CnnAsr(arch, rng=init_rng)
    opt = nn.OptimizerState(lr=config.lr)

    def step(i):
        u = train[i]
        logits, cache = model.forward(u.features, TRAIN)
        res = ctc_loss(logits, u.labels)
        nn.adam_step(model.params, model.backward(res.grad, cache), opt)
        return res.loss

    def dev_eval():
        losses, refs, hyps = [], [], []
        for u in dev:
            logits, _ = model.forward(u.features, INFER)
            losses.append(ctc_loss(logits, u.labels).loss)
            refs.append(u.labels)
            hyps.append(greedy_decode(logits))
        return float(np.mean(losses)), symbol_error_rate(refs, hyps)

    def snapshot():
        return copy.deepcopy((model.params, model.running, opt.step))

    history, (best_loss, best_epoch, snap) = _run_epochs(
        len(train), config.epochs, config.patience, step, dev_eval, snapshot, order_rng)
    params, running, steps = snap
    best = CnnAsr(arch, params, running)
    meta = dict(metadata or {})
    meta.update({
        "seed": config.seed, "steps": steps, "best_epoch": best_epoch, "epochs_run": len(history),
        "best_dev_loss": best_loss, "best_dev_ser": history[best_epoch - 1]["dev_ser"],
        "skipped_utterances": skipped + dev_skipped, "kernels": kernels.BACKEND,
        "train": asdict(config),
    })
    ckpt = best.to_checkpoint(inventory, meta)
    ckpt.metadata["tensor_digest"] = ckpt.tensor_digest()
    return TrainResult(ckpt, history, best_epoch, skipped + dev_skipped)


def resolve_asr(asr) -> tuple[Checkpoint, str | None]:
    """Load and integrity-check a frozen ASR given as a path or a Checkpoint."""
    file_hash = None
    if isinstance(asr, (str, Path)):
        if not Path(asr).is_file():
            raise IntegrityError(f"ASR checkpoint {asr} does not exist")
        file_hash = file_digest(asr)
        asr = load_checkpoint(asr, kind="asr")
    if not isinstance(asr, Checkpoint) or asr.kind != "asr":
        raise IntegrityError("train_ptn needs an ASR checkpoint")
    recorded = asr.metadata.get("tensor_digest")
    if recorded is not None and recorded != asr.tensor_digest():
        raise IntegrityError("ASR tensors do not match the digest recorded at training time")
    return asr, file_hash


def source_posteriorgrams(asr_model: CnnAsr, corpus) -> list:
    return [asr_model.posteriorgram(u.features) for u in corpus]


def train_ptn(asr, train_corpus, dev_corpus, config: PtnTrainConfig = PtnTrainConfig(),
              metadata: dict | None = None) -> TrainResult:
    """Stage 2: fit the PTN on target transcripts through the frozen ASR.

    The ASR runs in inference mode (frozen batch-norm statistics, no
    gradient), so its posteriorgrams are computed once per utterance and
    reused across epochs.
    """
    asr_ckpt, asr_file_hash = resolve_asr(asr)
    asr_model = CnnAsr.from_checkpoint(asr_ckpt)
    tgt_inv = train_corpus.inventory
    src_symbols = asr_ckpt.inventories.get("source")
    src_inv = SymbolInventory(tuple(src_symbols)) if src_symbols is not None else None

    train, skipped = _feasible(train_corpus, "target train")
    dev, dev_skipped = _feasible(dev_corpus, "target dev")
    if not train or not dev:
        raise TrainingError("no feasible target utterances to train the PTN on")
    if train[0].features.shape[1] != asr_model.arch.n_in:
        raise InvalidArgumentError(
            f"target features have width {train[0].features.shape[1]}, ASR expects {asr_model.arch.n_in}")

    train_post = source_posteriorgrams(asr_model, train)
    dev_post = source_posteriorgrams(asr_model, dev)

    arch = PtnArch(asr_model.arch.n_out, tgt_inv.width, config.hidden, config.dropout)
    init_rng, order_rng, drop_rng = [np.random.default_rng(s) for s in np.random.SeedSequence(config.seed).spawn(3)]
    ptn = Ptn(arch, rng=init_rng)
    opt = nn.OptimizerState(lr=config.lr)

    def step(i):
        logits, cache = ptn.forward(train_post[i], TRAIN, drop_rng)
        res = ctc_loss(logits, train[i].labels)
        nn.adam_step(ptn.params, ptn.backward(res.grad, cache), opt)
        return res.loss

    def dev_eval():
        losses, refs, hyps = [], [], []
        for post, u in zip(dev_post, dev):
            logits, _ = ptn.forward(post, INFER)
            losses.append(ctc_loss(logits, u.labels).loss)
            refs.append(u.labels)
            hyps.append(greedy_decode(logits))
        return float(np.mean(losses)), symbol_error_rate(refs, hyps)

    def snapshot():
        return copy.deepcopy((ptn.params, opt.step))

    history, (best_loss, best_epoch, snap) = _run_epochs(
        len(train), config.epochs, config.patience, step, dev_eval, snapshot, order_rng)
    params, steps = snap
    best = Ptn(arch, params)
    meta = dict(metadata or {})
    meta.update({
        "seed": config.seed, "steps": steps, "best_epoch": best_epoch, "epochs_run": len(history),
        "best_dev_loss": best_loss, "best_dev_ser": history[best_epoch - 1]["dev_ser"],
        "skipped_utterances": skipped + dev_skipped, "kernels": kernels.BACKEND,
        "asr_tensor_digest": asr_ckpt.metadata.get("tensor_digest", asr_ckpt.tensor_digest()),
        "train": asdict(config),
    })
    if asr_file_hash is not None:
        meta["asr_file_digest"] = asr_file_hash
    ckpt = best.to_checkpoint(src_inv, tgt_inv, meta)
    ckpt.metadata["tensor_digest"] = ckpt.tensor_digest()
    return TrainResult(ckpt, history, best_epoch, skipped + dev_skipped)


def composed_loss_and_grad(asr_model: CnnAsr, ptn: Ptn, features, labels):
    """CTC loss of frozen ASR -> PTN (inference mode) and its gradient w.r.t. PTN parameters."""
    p_src = asr_model.posteriorgram(features)
    logits, cache = ptn.forward(p_src, INFER)
    res = ctc_loss(logits, labels)
    return res.loss, ptn.backward(res.grad, cache)
