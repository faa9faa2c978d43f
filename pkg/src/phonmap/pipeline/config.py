"""Experiment configuration: defaults, JSON loading, overrides, validation, digests.

Precedence is command-line flags > config file > ``PHONMAP_SEED`` (seed
only) > built-in defaults. Every value is checked and errors name the dotted
key. The output directory does not enter any digest, so the same config run
in two directories produces identical artifacts.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from pathlib import Path

from ..errors import ConfigError

DEFAULTS = {
    "seed": 7,
    "output_dir": "phonmap-run",
    "synthlang": {
        "dim": 8,
        "n_src": 20,
        "n_tgt": 20,
        "overlap": 0.7,
        "sigma": 0.25,
        "duration": [2, 6],
        "mean_scale": 1.0,
        "utt_len": [5, 15],
        "src_minutes": 30.0,
        "tgt_minutes": 15.0,
        "src_dev_utts": 200,
        "tgt_dev_utts": 100,
    },
    "asr": {"hidden": 128, "blocks": 4, "kernel": 5, "epochs": 50, "patience": 10, "lr": 1e-3},
    "ptn": {"hidden": 128, "dropout": 0.4, "epochs": 100, "patience": 10, "lr": 1e-3},
    "mapping": {"xi": 0.4, "smoothing": 0.0},
    "embedding": {"dim": 16, "strategy": "learned", "std": 0.3, "unified_table": None, "source": None},
    "evaluation": {"baseline_trials": 100000, "xi_sweep": [0.0, 0.2, 0.4, 0.6, 0.8]},
}

STRATEGIES = ("separate", "unified", "learned")

# which config sections each stage's outputs depend on (cumulative)
STAGE_SECTIONS = {
    "gen-data": ("synthlang",),
    "train-asr": ("synthlang", "asr"),
    "train-ptn": ("synthlang", "asr", "ptn"),
    "discover-map": ("synthlang", "asr", "ptn", "mapping"),
    "transfer-embeddings": ("synthlang", "asr", "ptn", "mapping", "embedding"),
    "eval-map": ("synthlang", "asr", "ptn", "mapping", "evaluation"),
}


def _num(key, v, *, lo=None, hi=None, lo_open=False, hi_open=False, integer=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or (integer and not isinstance(v, int)):
        raise ConfigError(key, f"expected {'an integer' if integer else 'a number'}, got {v!r}")
    if lo is not None and (v < lo or (lo_open and v == lo)):
        raise ConfigError(key, f"must be {'>' if lo_open else '>='} {lo}, got {v!r}")
    if hi is not None and (v > hi or (hi_open and v == hi)):
        raise ConfigError(key, f"must be {'<' if hi_open else '<='} {hi}, got {v!r}")
    return v


def _range(key, v, lo=1):
    if not (isinstance(v, list) and len(v) == 2):
        raise ConfigError(key, f"expected [min, max], got {v!r}")
    a = _num(key + "[0]", v[0], lo=lo, integer=True)
    b = _num(key + "[1]", v[1], lo=lo, integer=True)
    if b < a:
        raise ConfigError(key, f"max must be >= min, got {v!r}")


def validate(cfg: dict) -> dict:
    for key in cfg:
        if key not in DEFAULTS:
            raise ConfigError(key, "unknown key")
    for section, defaults in DEFAULTS.items():
        if isinstance(defaults, dict):
            if not isinstance(cfg.get(section), dict):
                raise ConfigError(section, "expected an object")
            for key in cfg[section]:
                if key not in defaults:
                    raise ConfigError(f"{section}.{key}", "unknown key")
            for key in defaults:
                if key not in cfg[section]:
                    raise ConfigError(f"{section}.{key}", "missing")
    _num("seed", cfg["seed"], lo=0, integer=True)
    if not isinstance(cfg["output_dir"], str) or not cfg["output_dir"]:
        raise ConfigError("output_dir", "expected a non-empty path string")

    s = cfg["synthlang"]
    for k in ("dim", "n_src", "n_tgt"):
        _num(f"synthlang.{k}", s[k], lo=1, integer=True)
    _num("synthlang.overlap", s["overlap"], lo=0, hi=1)
    _num("synthlang.sigma", s["sigma"], lo=0)
    _num("synthlang.mean_scale", s["mean_scale"], lo=0, lo_open=True)
    _range("synthlang.duration", s["duration"])
    _range("synthlang.utt_len", s["utt_len"])
    _num("synthlang.src_minutes", s["src_minutes"], lo=0, lo_open=True)
    _num("synthlang.tgt_minutes", s["tgt_minutes"], lo=0, lo_open=True)
    _num("synthlang.src_dev_utts", s["src_dev_utts"], lo=1, integer=True)
    _num("synthlang.tgt_dev_utts", s["tgt_dev_utts"], lo=1, integer=True)

    a = cfg["asr"]
    for k in ("hidden", "epochs", "patience"):
        _num(f"asr.{k}", a[k], lo=1, integer=True)
    _num("asr.blocks", a["blocks"], lo=0, integer=True)
    _num("asr.kernel", a["kernel"], lo=1, integer=True)
    if a["kernel"] % 2 == 0:
        raise ConfigError("asr.kernel", f"must be odd, got {a['kernel']}")
    _num("asr.lr", a["lr"], lo=0, lo_open=True)

    p = cfg["ptn"]
    for k in ("hidden", "epochs", "patience"):
        _num(f"ptn.{k}", p[k], lo=1, integer=True)
    _num("ptn.dropout", p["dropout"], lo=0, hi=1, hi_open=True)
    _num("ptn.lr", p["lr"], lo=0, lo_open=True)

    m = cfg["mapping"]
    _num("mapping.xi", m["xi"], lo=0, hi=1, hi_open=True)
    _num("mapping.smoothing", m["smoothing"], lo=0, hi=1, hi_open=True)

    e = cfg["embedding"]
    _num("embedding.dim", e["dim"], lo=1, integer=True)
    _num("embedding.std", e["std"], lo=0, lo_open=True)
    if e["strategy"] not in STRATEGIES:
        raise ConfigError("embedding.strategy", f"must be one of {', '.join(STRATEGIES)}, got {e['strategy']!r}")
    for k in ("unified_table", "source"):
        if e[k] is not None and not isinstance(e[k], str):
            raise ConfigError(f"embedding.{k}", f"expected a path string or null, got {e[k]!r}")

    ev = cfg["evaluation"]
    _num("evaluation.baseline_trials", ev["baseline_trials"], lo=2, integer=True)
    if not isinstance(ev["xi_sweep"], list) or not ev["xi_sweep"]:
        raise ConfigError("evaluation.xi_sweep", "expected a non-empty list")
    for k, xi in enumerate(ev["xi_sweep"]):
        _num(f"evaluation.xi_sweep[{k}]", xi, lo=0, hi=1, hi_open=True)
    return cfg


def _merge(base: dict, over: dict, prefix=""):
    for key, value in over.items():
        dotted = prefix + key
        if key not in base:
            raise ConfigError(dotted, "unknown key")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(dotted, "expected an object")
            _merge(base[key], value, dotted + ".")
        else:
            base[key] = value


def set_value(cfg: dict, dotted: str, raw: str) -> None:
    """Apply a ``section.key=value`` override; ``raw`` is parsed as JSON when possible."""
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    parts = dotted.split(".")
    node = cfg
    for k, part in enumerate(parts[:-1]):
        if not isinstance(node.get(part), dict):
            raise ConfigError(".".join(parts[:k + 1]), "unknown section")
        node = node[part]
    if parts[-1] not in node:
        raise ConfigError(dotted, "unknown key")
    node[parts[-1]] = value


def load_config(path=None, overrides: dict | None = None, sets=()) -> dict:
    """Build a validated config from defaults, env, an optional JSON file, and flags.

    ``overrides`` maps dotted keys to already-typed values (from dedicated
    flags); ``sets`` holds raw ``key=value`` strings.
    """
    cfg = copy.deepcopy(DEFAULTS)
    env_seed = os.environ.get("PHONMAP_SEED")
    if env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError:
            raise ConfigError("PHONMAP_SEED", f"expected an integer, got {env_seed!r}") from None
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError("config", f"file {path} does not exist") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON ({exc})") from None
        if not isinstance(data, dict):
            raise ConfigError("config", f"{path} must hold a JSON object")
        _merge(cfg, data)
    for item in sets:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ConfigError(item, "override must look like section.key=value")
        set_value(cfg, key.strip(), raw.strip())
    for key, value in (overrides or {}).items():
        if value is not None:
            set_value(cfg, key, json.dumps(value))
    return validate(cfg)


def canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")


def config_digest(cfg: dict) -> str:
    body = {k: v for k, v in cfg.items() if k != "output_dir"}
    return hashlib.sha256(canonical(body)).hexdigest()


def stage_digest(cfg: dict, stage: str) -> str:
    body = {"seed": cfg["seed"]}
    for section in STAGE_SECTIONS[stage]:
        body[section] = cfg[section]
    if stage == "transfer-embeddings" and cfg["embedding"]["strategy"] != "learned":
        body.pop("asr"), body.pop("ptn"), body.pop("mapping")
    return hashlib.sha256(canonical({"stage": stage, **body})).hexdigest()
