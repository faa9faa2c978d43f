"""Synthetic language pairs with a known cross-lingual symbol correspondence.

Each symbol emits frames drawn i.i.d. from an isotropic Gaussian around a
symbol-specific mean for a uniformly drawn number of frames. Shared sounds
reuse the exact same emission parameters under a different name in the
other language, which makes the true mapping known by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import GenerationError, IntegrityError, InvalidArgumentError
from .inventory import SymbolInventory

FRAMES_PER_MINUTE = 6000  # nominal 100 frames per second
CORPUS_FORMAT = "phonmap-corpus/1"


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 8
    n_src: int = 20
    n_tgt: int = 20
    overlap: float = 0.7
    sigma: float = 0.25
    duration: tuple[int, int] = (2, 6)
    mean_scale: float = 1.0
    seed: int = 0
    max_attempts: int = 100

    def __post_init__(self):
        if self.dim < 1 or self.n_src < 1 or self.n_tgt < 1:
            raise InvalidArgumentError("dim, n_src and n_tgt must be positive")
        if not 0.0 <= self.overlap <= 1.0:
            raise InvalidArgumentError(f"overlap must lie in [0, 1], got {self.overlap}")
        if self.sigma < 0:
            raise InvalidArgumentError(f"sigma must be non-negative, got {self.sigma}")
        lo, hi = self.duration
        if lo < 1 or hi < lo:
            raise InvalidArgumentError(f"duration range must satisfy 1 <= min <= max, got {self.duration}")

    @property
    def n_shared(self) -> int:
        # small epsilon so that e.g. 0.7 * 20 is not floored to 13
        return int(np.floor(self.overlap * min(self.n_src, self.n_tgt) + 1e-9))


@dataclass
class LanguageSpec:
    inventory: SymbolInventory
    means: np.ndarray  # N x D
    dur_min: np.ndarray  # N, int
    dur_max: np.ndarray  # N, int
    sigma: np.ndarray  # N
    seed: int = 0

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> dict:
        return {
            "symbols": list(self.inventory.symbols),
            "means": self.means.tolist(),
            "dur_min": self.dur_min.tolist(),
            "dur_max": self.dur_max.tolist(),
            "sigma": self.sigma.tolist(),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LanguageSpec":
        return cls(SymbolInventory(tuple(d["symbols"])), np.array(d["means"], dtype=np.float64),
                   np.array(d["dur_min"], dtype=np.int64), np.array(d["dur_max"], dtype=np.int64),
                   np.array(d["sigma"], dtype=np.float64), int(d["seed"]))


@dataclass(frozen=True)
class GroundTruthMapping:
    pairs: frozenset  # of (source index, target index)
    src_digest: str
    tgt_digest: str

    def __len__(self) -> int:
        return len(self.pairs)

    def to_text(self, src: SymbolInventory, tgt: SymbolInventory) -> str:
        lines = [f"{src[i]}\t{tgt[j]}\n" for i, j in sorted(self.pairs)]
        return "".join(lines)

    @classmethod
    def from_text(cls, text: str, src: SymbolInventory, tgt: SymbolInventory) -> "GroundTruthMapping":
        from .mapping import parse_pair_table

        pairs = parse_pair_table(text, src, tgt)
        return cls(frozenset(pairs), src.digest, tgt.digest)


def min_pairwise_distance(means: np.ndarray) -> float:
    if len(means) < 2:
        return float("inf")
    diff = means[:, None, :] - means[None, :, :]
    d = np.sqrt((diff ** 2).sum(axis=-1))
    d[np.diag_indices(len(means))] = np.inf
    return float(d.min())


def generate_language_pair(config: SynthConfig = SynthConfig()):
    """Return ``(source_spec, target_spec, ground_truth)`` for ``config``."""
    rng = np.random.default_rng(config.seed)
    n_shared = config.n_shared
    n_distinct = config.n_src + config.n_tgt - n_shared
    need = 4.0 * config.sigma
    for _ in range(config.max_attempts):
        means = rng.normal(0.0, config.mean_scale, size=(n_distinct, config.dim))
        if min_pairwise_distance(means) >= need:
            break
    else:
        raise GenerationError(
            f"could not place {n_distinct} emission means at least {need:g} apart in "
            f"{config.max_attempts} attempts; use a larger dim or a smaller sigma")

    src_shared = rng.choice(config.n_src, n_shared, replace=False)
    tgt_shared = rng.choice(config.n_tgt, n_shared, replace=False)
    src_means = means[:config.n_src]
    tgt_means = np.empty((config.n_tgt, config.dim))
    tgt_means[tgt_shared] = src_means[src_shared]
    own = np.setdiff1d(np.arange(config.n_tgt), tgt_shared)
    tgt_means[own] = means[config.n_src:]

    def make(prefix, n, mu):
        inv = SymbolInventory(tuple(f"{prefix}{k:02d}" for k in range(n)))
        return LanguageSpec(inv, mu.copy(), np.full(n, config.duration[0], dtype=np.int64),
                            np.full(n, config.duration[1], dtype=np.int64),
                            np.full(n, float(config.sigma)), config.seed)

    src = make("S", config.n_src, src_means)
    tgt = make("T", config.n_tgt, tgt_means)
    pairs = frozenset((int(i), int(j)) for i, j in zip(src_shared, tgt_shared))
    return src, tgt, GroundTruthMapping(pairs, src.inventory.digest, tgt.inventory.digest)


def synthesize_utterance(lang: LanguageSpec, symbols, rng) -> np.ndarray:
    ids = np.asarray(symbols, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= len(lang.inventory)):
        raise InvalidArgumentError(f"symbol ids out of range for inventory of size {len(lang.inventory)}")
    chunks = []
    for s in ids:
        dur = int(rng.integers(lang.dur_min[s], lang.dur_max[s] + 1))
        noise = rng.standard_normal((dur, lang.dim))
        chunks.append(lang.means[s] + lang.sigma[s] * noise)
    if not chunks:
        return np.zeros((0, lang.dim))
    return np.concatenate(chunks, axis=0)


@dataclass
class Utterance:
    id: str
    labels: np.ndarray
    features: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.features.shape[0]


@dataclass
class Corpus:
    inventory: SymbolInventory
    utterances: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    @property
    def total_frames(self) -> int:
        return sum(u.n_frames for u in self.utterances)

    @property
    def minutes(self) -> float:
        return self.total_frames / FRAMES_PER_MINUTE

    def symbol_counts(self) -> np.ndarray:
        counts = np.zeros(len(self.inventory), dtype=np.int64)
        for u in self.utterances:
            counts += np.bincount(u.labels, minlength=len(self.inventory))
        return counts


def _random_labels(n_symbols, len_range, rng):
    lo, hi = len_range
    length = int(rng.integers(lo, hi + 1))
    return rng.integers(0, n_symbols, size=length).astype(np.int64)


def generate_corpus(lang: LanguageSpec, n_utts: int, len_range, rng, prefix: str = "utt") -> Corpus:
    if n_utts < 1:
        raise InvalidArgumentError(f"n_utts must be at least 1, got {n_utts}")
    lo, hi = len_range
    if lo < 1 or hi < lo:
        raise InvalidArgumentError(f"length range must satisfy 1 <= min <= max, got {len_range}")
    utts = []
    for k in range(n_utts):
        labels = _random_labels(len(lang.inventory), len_range, rng)
        utts.append(Utterance(f"{prefix}{k:05d}", labels, synthesize_utterance(lang, labels, rng)))
    return Corpus(lang.inventory, utts)


def generate_corpus_minutes(lang: LanguageSpec, minutes: float, len_range, rng, prefix: str = "utt") -> Corpus:
    """Generate utterances until the corpus holds ``minutes`` of nominal frames."""
    target = int(np.ceil(minutes * FRAMES_PER_MINUTE))
    corpus = Corpus(lang.inventory)
    frames = 0
    k = 0
    while frames < target or k == 0:
        labels = _random_labels(len(lang.inventory), len_range, rng)
        feats = synthesize_utterance(lang, labels, rng)
        corpus.utterances.append(Utterance(f"{prefix}{k:05d}", labels, feats))
        frames += feats.shape[0]
        k += 1
    return corpus


# -- on-disk corpus ------------------------------------------------------------


def save_corpus(corpus: Corpus, directory) -> None:
    directory = Path(directory)
    (directory / "feats").mkdir(parents=True, exist_ok=True)
    corpus.inventory.save(directory / "inventory.txt")
    dim = corpus.utterances[0].features.shape[1] if corpus.utterances else 0
    entries = []
    for u in corpus.utterances:
        rel = f"feats/{u.id}.f64"
        (directory / rel).write_bytes(np.ascontiguousarray(u.features, dtype="<f8").tobytes())
        entries.append({"id": u.id, "frames": u.n_frames, "labels": [int(x) for x in u.labels], "file": rel})
    manifest = {
        "format": CORPUS_FORMAT,
        "dim": dim,
        "inventory_digest": corpus.inventory.digest,
        "total_frames": corpus.total_frames,
        "utterances": entries,
        "metadata": corpus.metadata,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def load_corpus(directory) -> Corpus:
    directory = Path(directory)
    inventory = SymbolInventory.load(directory / "inventory.txt")
    manifest = json.loads((directory / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("format") != CORPUS_FORMAT:
        raise IntegrityError(f"{directory}: unsupported corpus format {manifest.get('format')!r}")
    if manifest["inventory_digest"] != inventory.digest:
        raise IntegrityError(f"{directory}: inventory.txt does not match the manifest digest")
    dim = manifest["dim"]
    utts = []
    for e in manifest["utterances"]:
        raw = (directory / e["file"]).read_bytes()
        if len(raw) != e["frames"] * dim * 8:
            raise IntegrityError(f"{directory / e['file']}: expected {e['frames']}x{dim} float64 values")
        feats = np.frombuffer(raw, dtype="<f8").reshape(e["frames"], dim).astype(np.float64)
        utts.append(Utterance(e["id"], np.array(e["labels"], dtype=np.int64), feats))
    return Corpus(inventory, utts, manifest.get("metadata", {}))
