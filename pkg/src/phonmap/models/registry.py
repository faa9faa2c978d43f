from __future__ import annotations

from ..errors import ManifestError


def expected_shapes(kind: str, arch: dict) -> dict:
    from .asr import AsrArch
    from .ptn import PtnArch

    try:
        if kind == "asr":
            a = AsrArch(**arch)
            return {**a.param_shapes(), **a.buffer_shapes()}
        if kind == "ptn":
            return PtnArch(**arch).param_shapes()
        if kind == "embedding":
            return {"weight": (int(arch["rows"]), int(arch["dim"]))}
    except (TypeError, KeyError, ValueError) as exc:
        raise ManifestError(f"invalid {kind} architecture {arch!r}: {exc}") from None
    raise ManifestError(f"unknown model kind {kind!r}")


def validate_shapes(ckpt, source: str = "<checkpoint>") -> None:
    want = expected_shapes(ckpt.kind, ckpt.arch)
    got = {name: tuple(t.shape) for name, t in ckpt.tensors.items()}
    if set(want) != set(got):
        missing = sorted(set(want) - set(got))
        extra = sorted(set(got) - set(want))
        raise ManifestError(f"{source}: {ckpt.kind} tensors mismatch (missing {missing}, unexpected {extra})")
    for name, shape in want.items():
        if tuple(shape) != got[name]:
            raise ManifestError(f"{source}: tensor {name!r} has shape {got[name]}, expected {tuple(shape)}")
