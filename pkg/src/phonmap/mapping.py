"""Source-to-target symbol mapping discovery and target embedding initialization.

A trained PTN is probed with a one-hot source distribution per source
symbol. The most probable non-blank target symbol becomes the mapping if its
probability exceeds the threshold ``xi``. The mapping then decides which
target embedding rows are copied from source rows ("learned"); a handcrafted
correspondence file drives the same copy ("unified"); with no mapping every
row is drawn fresh ("separate").
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import IntegrityError, InvalidArgumentError, ModelKindError
from .inventory import SymbolInventory
from .models.checkpoint import Checkpoint
from .models.ptn import Ptn, ptn_forward

EMBED_STD = 0.3
DEFAULT_EMBED_DIM = 16


# -- probing -------------------------------------------------------------------


def probe(ptn: Ptn, i: int, smoothing: float = 0.0) -> np.ndarray:
    """Target distribution (blank last) the PTN assigns to source symbol ``i``.

    ``smoothing`` mixes the one-hot input with the uniform distribution;
    0 gives the plain one-hot probe.
    """
    width = ptn.arch.n_in
    n_src = width - 1
    if not isinstance(i, (int, np.integer)) or not 0 <= i < n_src:
        raise InvalidArgumentError(f"probe index must be a source symbol in [0, {n_src}), got {i!r}")
    if not 0.0 <= smoothing < 1.0:
        raise InvalidArgumentError(f"smoothing must lie in [0, 1), got {smoothing}")
    o = np.zeros((1, width))
    o[0, i] = 1.0
    if smoothing:
        o = (1.0 - smoothing) * o + smoothing / width
    return ptn_forward(ptn, o, "infer")[0]


@dataclass
class MappingTable:
    """Partial map from source index to ``(target index, confidence)``."""

    entries: list  # per source symbol: None or (j, confidence)
    src_digest: str
    tgt_digest: str
    metadata: dict = field(default_factory=dict)

    def pairs(self) -> dict:
        return {i: e for i, e in enumerate(self.entries) if e is not None}

    def to_text(self, src: SymbolInventory, tgt: SymbolInventory) -> str:
        if src.digest != self.src_digest or tgt.digest != self.tgt_digest:
            raise IntegrityError("inventories do not match the mapping table digests")
        lines = [f"# src_digest={self.src_digest}\n", f"# tgt_digest={self.tgt_digest}\n"]
        for key in sorted(self.metadata):
            lines.append(f"# {key}={json.dumps(self.metadata[key], sort_keys=True)}\n")
        for i, e in enumerate(self.entries):
            if e is None:
                lines.append(f"{src[i]}\tNONE\n")
            else:
                lines.append(f"{src[i]}\t{tgt[e[0]]}\t{e[1]!r}\n")
        return "".join(lines)

    @classmethod
    def from_text(cls, text: str, src: SymbolInventory, tgt: SymbolInventory) -> "MappingTable":
        entries = [None] * len(src)
        seen = set()
        header = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, value = line[1:].strip().partition("=")
                if sep:
                    header[key.strip()] = value.strip()
                continue
            fields = [f.strip() for f in line.split("\t")]
            s = fields[0]
            if s not in src:
                raise InvalidArgumentError(f"line {lineno}: unknown source symbol {s!r}")
            i = src.index(s)
            if i in seen:
                raise InvalidArgumentError(f"line {lineno}: source symbol {s!r} listed twice")
            seen.add(i)
            if len(fields) == 2 and fields[1] == "NONE":
                continue
            if len(fields) != 3:
                raise InvalidArgumentError(f"line {lineno}: expected '<src>\\t<tgt>\\t<confidence>' or '<src>\\tNONE'")
            if fields[1] not in tgt:
                raise InvalidArgumentError(f"line {lineno}: unknown target symbol {fields[1]!r}")
            try:
                conf = float(fields[2])
            except ValueError:
                raise InvalidArgumentError(f"line {lineno}: bad confidence {fields[2]!r}") from None
            if not 0.0 < conf <= 1.0:
                raise InvalidArgumentError(f"line {lineno}: confidence {conf} outside (0, 1]")
            entries[i] = (tgt.index(fields[1]), conf)
        for role, inv in (("src", src), ("tgt", tgt)):
            recorded = header.pop(f"{role}_digest", None)
            if recorded is not None and recorded != inv.digest:
                raise IntegrityError(f"mapping table {role} digest does not match the {role} inventory")
        metadata = {}
        for key, value in header.items():
            try:
                metadata[key] = json.loads(value)
            except json.JSONDecodeError:
                metadata[key] = value
        return cls(entries, src.digest, tgt.digest, metadata)


def discover_mapping(ptn: Ptn, src_inv: SymbolInventory, tgt_inv: SymbolInventory, xi: float = 0.4,
                     smoothing: float = 0.0) -> MappingTable:
    """Probe every source symbol and keep the best non-blank target above ``xi``.

    Ties in the argmax go to the lowest target index.
    """
    if not 0.0 <= xi < 1.0:
        raise InvalidArgumentError(f"xi must lie in [0, 1), got {xi}")
    if ptn.arch.n_in != src_inv.width or ptn.arch.n_out != tgt_inv.width:
        raise InvalidArgumentError(
            f"PTN maps width {ptn.arch.n_in} -> {ptn.arch.n_out}, inventories need "
            f"{src_inv.width} -> {tgt_inv.width}")
    entries = []
    for i in range(len(src_inv)):
        dist = probe(ptn, i, smoothing)[:len(tgt_inv)]  # drop blank
        j = int(np.argmax(dist))
        conf = float(dist[j])
        entries.append((j, conf) if conf > xi else None)
    return MappingTable(entries, src_inv.digest, tgt_inv.digest, {"xi": xi, "smoothing": smoothing})


def threshold_table(table: MappingTable, xi: float) -> MappingTable:
    """Re-threshold an existing table at a stricter ``xi``."""
    entries = [e if e is not None and e[1] > xi else None for e in table.entries]
    return MappingTable(entries, table.src_digest, table.tgt_digest, {**table.metadata, "xi": xi})


# -- handcrafted pair tables -----------------------------------------------------


def parse_pair_table(text: str, src: SymbolInventory, tgt: SymbolInventory) -> list:
    """Parse ``<src>\\t<tgt>`` lines (``#`` comments allowed) into index pairs.

    The table must be a conflict-free partial function: no source listed
    twice, no target claimed by two sources.
    """
    pairs = []
    by_src = {}
    by_tgt = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split("\t") if f.strip()]
        if len(fields) != 2:
            raise InvalidArgumentError(f"line {lineno}: expected '<src>\\t<tgt>', got {raw!r}")
        s, t = fields
        if s not in src:
            raise InvalidArgumentError(f"line {lineno}: unknown source symbol {s!r}")
        if t not in tgt:
            raise InvalidArgumentError(f"line {lineno}: unknown target symbol {t!r}")
        if s in by_src:
            raise InvalidArgumentError(f"line {lineno}: source symbol {s!r} already mapped on line {by_src[s]}")
        if t in by_tgt:
            raise InvalidArgumentError(
                f"line {lineno}: target symbol {t!r} already claimed on line {by_tgt[t]}")
        by_src[s] = by_tgt[t] = lineno
        pairs.append((src.index(s), tgt.index(t)))
    return pairs


# -- embeddings ------------------------------------------------------------------


@dataclass
class EmbeddingMatrix:
    rows: np.ndarray  # N x d
    inventory: SymbolInventory

    def __post_init__(self):
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[0] != len(self.inventory):
            raise InvalidArgumentError(
                f"embedding rows {self.rows.shape} do not match inventory size {len(self.inventory)}")
        if not np.all(np.isfinite(self.rows)):
            raise InvalidArgumentError("embedding contains non-finite values")

    @property
    def digest(self) -> str:
        return self.inventory.digest

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    def to_checkpoint(self, metadata=None) -> Checkpoint:
        return Checkpoint("embedding", {"weight": self.rows},
                          {"rows": self.rows.shape[0], "dim": self.rows.shape[1]},
                          {"symbols": list(self.inventory.symbols)}, dict(metadata or {}))

    @classmethod
    def from_checkpoint(cls, ckpt: Checkpoint) -> "EmbeddingMatrix":
        if ckpt.kind != "embedding":
            raise ModelKindError(f"expected an 'embedding' checkpoint, got {ckpt.kind!r}")
        return cls(ckpt.tensors["weight"].copy(), SymbolInventory(tuple(ckpt.inventories["symbols"])))


@dataclass
class TransferReport:
    strategy: str
    rows: list  # per target row: {"target", "init", "source", "confidence"}

    @property
    def copied(self) -> list:
        return [k for k, r in enumerate(self.rows) if r["init"] == "copied"]

    @property
    def random(self) -> list:
        return [k for k, r in enumerate(self.rows) if r["init"] == "random"]

    def to_json(self) -> str:
        return json.dumps({"strategy": self.strategy, "rows": self.rows}, sort_keys=True, indent=1) + "\n"


def _assemble(W_src, choice, tgt_inv, rng, std, strategy):
    """``choice`` maps target index -> (source index, confidence or None)."""
    d = W_src.dim
    rows = np.empty((len(tgt_inv), d))
    fresh = [j for j in range(len(tgt_inv)) if j not in choice]
    if fresh:
        rows[fresh] = rng.normal(0.0, std, size=(len(fresh), d))
    report = []
    for j in range(len(tgt_inv)):
        if j in choice:
            i, conf = choice[j]
            rows[j] = W_src.rows[i]
            report.append({"target": tgt_inv[j], "init": "copied", "source": W_src.inventory[i],
                           "confidence": conf})
        else:
            report.append({"target": tgt_inv[j], "init": "random", "source": None, "confidence": None})
    return EmbeddingMatrix(rows, tgt_inv), TransferReport(strategy, report)


def separate_init(tgt_inv: SymbolInventory, d: int = DEFAULT_EMBED_DIM, rng=None, std: float = EMBED_STD):
    """Every row drawn i.i.d. from N(0, std^2)."""
    if d < 1:
        raise InvalidArgumentError(f"embedding width must be at least 1, got {d}")
    if rng is None:
        raise InvalidArgumentError("separate_init needs a seeded generator")
    return EmbeddingMatrix(rng.normal(0.0, std, size=(len(tgt_inv), d)), tgt_inv)


def transfer_embeddings(W_src: EmbeddingMatrix, table: MappingTable, tgt_inv: SymbolInventory, rng,
                        std: float = EMBED_STD):
    """Initialize target embeddings from a discovered mapping.

    A target claimed by several sources takes the row of the most confident
    one (lowest source index on exact ties). Returns ``(W_tgt, report)``.
    """
    if W_src.digest != table.src_digest:
        raise IntegrityError("source embedding inventory does not match the mapping table")
    if tgt_inv.digest != table.tgt_digest:
        raise IntegrityError("target inventory does not match the mapping table")
    if len(table.entries) != len(W_src.inventory):
        raise IntegrityError("mapping table length differs from the source inventory")
    choice = {}
    for i, e in enumerate(table.entries):
        if e is None:
            continue
        j, conf = e
        if j not in choice or conf > choice[j][1]:
            choice[j] = (i, conf)
    return _assemble(W_src, choice, tgt_inv, rng, std, "learned")


def unified_transfer(W_src: EmbeddingMatrix, pairs, tgt_inv: SymbolInventory, rng, std: float = EMBED_STD):
    """Initialize target embeddings from a handcrafted ``(source, target)`` index list."""
    choice = {}
    seen_src = set()
    for i, j in pairs:
        if not 0 <= i < len(W_src.inventory) or not 0 <= j < len(tgt_inv):
            raise InvalidArgumentError(f"pair ({i}, {j}) references a symbol outside the inventories")
        if j in choice:
            raise InvalidArgumentError(
                f"target {tgt_inv[j]!r} is claimed by both {W_src.inventory[choice[j][0]]!r} "
                f"and {W_src.inventory[i]!r}")
        if i in seen_src:
            raise InvalidArgumentError(f"source {W_src.inventory[i]!r} is mapped twice")
        seen_src.add(i)
        choice[j] = (i, None)
    return _assemble(W_src, choice, tgt_inv, rng, std, "unified")
