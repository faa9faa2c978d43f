"""Scoring discovered mappings against a reference and posteriorgram diagnostics."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .errors import IntegrityError, InvalidArgumentError


@dataclass
class MappingScore:
    precision: float
    recall: float
    n_predicted: int
    n_correct: int
    overlap_size: int
    precision_vacuous: bool = False
    recall_vacuous: bool = False
    verdicts: list = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"


def evaluate_mapping(predicted, reference, src_inventory=None) -> MappingScore:
    """Precision and recall of ``predicted`` (a MappingTable) against ``reference`` pairs.

    An entry ``i -> j`` counts as correct when ``(i, j)`` is a reference pair.
    Recall is taken over the reference size. With no predictions, precision is
    reported as 1.0 and flagged vacuous.
    """
    if predicted.src_digest != reference.src_digest or predicted.tgt_digest != reference.tgt_digest:
        raise IntegrityError("mapping table and reference were built for different inventories")
    pairs = reference.pairs
    verdicts = []
    n_pred = n_correct = 0
    for i, entry in enumerate(predicted.entries):
        name = src_inventory[i] if src_inventory is not None else i
        if entry is None:
            verdicts.append({"source": name, "verdict": "none"})
            continue
        n_pred += 1
        ok = (i, entry[0]) in pairs
        n_correct += ok
        verdicts.append({"source": name, "verdict": "correct" if ok else "incorrect"})
    overlap = len(pairs)
    return MappingScore(
        precision=n_correct / n_pred if n_pred else 1.0,
        recall=n_correct / overlap if overlap else 1.0,
        n_predicted=n_pred, n_correct=n_correct, overlap_size=overlap,
        precision_vacuous=n_pred == 0, recall_vacuous=overlap == 0, verdicts=verdicts,
    )


def random_baseline_recall(overlap_size: int) -> float:
    """Expected recall when each overlapping source symbol is sent to a uniformly
    random target symbol of the overlap: one expected hit out of ``overlap_size``."""
    if overlap_size < 1:
        raise InvalidArgumentError(f"overlap_size must be at least 1, got {overlap_size}")
    return 1.0 / overlap_size


def random_baseline_recall_mc(overlap_size: int, trials: int, seed: int) -> tuple[float, float]:
    """Monte Carlo estimate of ``random_baseline_recall``; returns ``(mean, standard_error)``."""
    if overlap_size < 1:
        raise InvalidArgumentError(f"overlap_size must be at least 1, got {overlap_size}")
    if trials < 2:
        raise InvalidArgumentError(f"need at least 2 trials, got {trials}")
    rng = np.random.default_rng(seed)
    recalls = np.empty(trials)
    block = max(1, 2_000_000 // overlap_size)
    truth = np.arange(overlap_size)
    for start in range(0, trials, block):
        n = min(block, trials - start)
        guesses = rng.integers(0, overlap_size, size=(n, overlap_size))
        recalls[start:start + n] = (guesses == truth).sum(axis=1) / overlap_size
    return float(recalls.mean()), float(recalls.std(ddof=1) / np.sqrt(trials))


def symbol_error_rate(refs, hyps) -> float:
    """Total edit distance over total reference length."""
    errors = sum(kernels.edit_distance(r, h) for r, h in zip(refs, hyps))
    total = sum(len(r) for r in refs)
    if total == 0:
        raise InvalidArgumentError("symbol error rate needs at least one reference symbol")
    return errors / total


def posteriorgram_report(posteriorgrams) -> dict:
    """Entropy distribution, greedy blank fraction and row-sum deviation of posteriorgrams.

    The blank is the last column. Entropies are in nats.
    """
    rows = [np.asarray(p, dtype=np.float64) for p in posteriorgrams]
    if not rows:
        raise InvalidArgumentError("posteriorgram_report needs at least one posteriorgram")
    stacked = np.concatenate(rows, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(stacked > 0, stacked * np.log(stacked), 0.0)
    entropy = -plogp.sum(axis=1)
    blank = stacked.shape[1] - 1
    q = np.percentile(entropy, [5, 25, 50, 75, 95])
    return {
        "frames": int(stacked.shape[0]),
        "width": int(stacked.shape[1]),
        "entropy_mean": float(entropy.mean()),
        "entropy_std": float(entropy.std()),
        "entropy_percentiles": {str(k): float(v) for k, v in zip((5, 25, 50, 75, 95), q)},
        "max_entropy": float(np.log(stacked.shape[1])),
        "blank_fraction": float(np.mean(stacked.argmax(axis=1) == blank)),
        "max_row_sum_deviation": float(np.abs(stacked.sum(axis=1) - 1.0).max()),
    }
