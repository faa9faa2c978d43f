"""Versioned named-tensor container.

Layout (all integers little-endian)::

    b"PHONMAP1" | u64 manifest length | UTF-8 JSON manifest | SHA-256 of manifest | raw <f8 payload

The manifest lists every tensor as ``{name, shape, offset, nbytes}`` in
payload order and carries a SHA-256 of the payload. With the manifest's own
digest after it, any flipped byte is caught on load. JSON is written with sorted keys and no whitespace, which
makes save -> load -> save byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import (
    CorruptPayloadError,
    ManifestError,
    ModelKindError,
    TruncatedPayloadError,
    VersionMismatchError,
)

MAGIC = b"PHONMAP1"
FORMAT_VERSION = 1
KINDS = ("asr", "ptn", "embedding")


@dataclass
class Checkpoint:
    kind: str
    tensors: dict  # name -> ndarray, insertion order is payload order
    arch: dict = field(default_factory=dict)
    inventories: dict = field(default_factory=dict)  # role -> list of symbols
    metadata: dict = field(default_factory=dict)

    def tensor_digest(self) -> str:
        """Hash of tensor names, shapes and values; ignores metadata."""
        h = hashlib.sha256()
        for name, t in self.tensors.items():
            h.update(name.encode("utf-8"))
            h.update(repr(tuple(t.shape)).encode("ascii"))
            h.update(np.ascontiguousarray(t, dtype="<f8").tobytes())
        return h.hexdigest()


def to_bytes(ckpt: Checkpoint) -> bytes:
    if ckpt.kind not in KINDS:
        raise ModelKindError(f"unknown model kind {ckpt.kind!r}")
    entries = []
    chunks = []
    offset = 0
    for name, t in ckpt.tensors.items():
        raw = np.ascontiguousarray(t, dtype="<f8").tobytes()
        entries.append({"name": name, "shape": list(np.shape(t)), "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "kind": ckpt.kind,
        "arch": ckpt.arch,
        "inventories": ckpt.inventories,
        "metadata": ckpt.metadata,
        "tensors": entries,
        "payload_nbytes": len(payload),
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(head)) + head + hashlib.sha256(head).digest() + payload


def from_bytes(blob: bytes, kind: str | None = None, source: str = "<bytes>") -> Checkpoint:
    if len(blob) < 16 or blob[:8] != MAGIC:
        raise ManifestError(f"{source}: not a phonmap checkpoint (bad magic)")
    (n_head,) = struct.unpack("<Q", blob[8:16])
    end = 16 + n_head + 32
    if end > len(blob):
        raise TruncatedPayloadError(f"{source}: manifest extends past end of file")
    head = blob[16:16 + n_head]
    if hashlib.sha256(head).digest() != blob[16 + n_head:end]:
        raise ManifestError(f"{source}: manifest checksum mismatch")
    try:
        manifest = json.loads(head.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{source}: unreadable manifest ({exc})") from None
    if not isinstance(manifest, dict):
        raise ManifestError(f"{source}: manifest is not an object")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"{source}: format version {version!r}, expected {FORMAT_VERSION}")
    found_kind = manifest.get("kind")
    if found_kind not in KINDS:
        raise ModelKindError(f"{source}: unknown model kind {found_kind!r}")
    if kind is not None and found_kind != kind:
        raise ModelKindError(f"{source}: checkpoint holds a {found_kind!r} model, expected {kind!r}")

    payload = blob[end:]
    expected = manifest.get("payload_nbytes")
    if not isinstance(expected, int):
        raise ManifestError(f"{source}: manifest lacks payload_nbytes")
    if len(payload) < expected:
        raise TruncatedPayloadError(f"{source}: payload has {len(payload)} bytes, manifest declares {expected}")
    if len(payload) > expected:
        raise ManifestError(f"{source}: {len(payload) - expected} trailing bytes after payload")
    if hashlib.sha256(payload).hexdigest() != manifest.get("payload_sha256"):
        raise CorruptPayloadError(f"{source}: payload checksum mismatch")

    tensors = {}
    cursor = 0
    for e in manifest.get("tensors", []):
        name, shape, off, nb = e.get("name"), e.get("shape"), e.get("offset"), e.get("nbytes")
        if not isinstance(name, str) or name in tensors:
            raise ManifestError(f"{source}: bad or duplicate tensor name {name!r}")
        if not (isinstance(shape, list) and all(isinstance(s, int) and s >= 0 for s in shape)):
            raise ManifestError(f"{source}: tensor {name!r} has invalid shape {shape!r}")
        if off != cursor or nb != 8 * int(np.prod(shape, dtype=np.int64)) or off + nb > expected:
            raise ManifestError(f"{source}: tensor {name!r} offset/size inconsistent with payload layout")
        cursor += nb
        tensors[name] = np.frombuffer(payload, dtype="<f8", count=nb // 8, offset=off).reshape(shape).astype(np.float64)
    if cursor != expected:
        raise ManifestError(f"{source}: tensors cover {cursor} of {expected} payload bytes")

    ckpt = Checkpoint(found_kind, tensors, manifest.get("arch", {}), manifest.get("inventories", {}),
                      manifest.get("metadata", {}))
    from .registry import validate_shapes

    validate_shapes(ckpt, source)
    return ckpt


def save_checkpoint(model_or_ckpt, path) -> str:
    """Write a checkpoint (or anything with ``to_checkpoint()``); returns the file's SHA-256."""
    ckpt = model_or_ckpt if isinstance(model_or_ckpt, Checkpoint) else model_or_ckpt.to_checkpoint()
    blob = to_bytes(ckpt)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    tmp.replace(path)
    return hashlib.sha256(blob).hexdigest()


def load_checkpoint(path, kind: str | None = None) -> Checkpoint:
    return from_bytes(Path(path).read_bytes(), kind=kind, source=str(path))


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
