"""Pipeline stages over one output directory.

Layout under the output directory::

    data/{source,target}_{train,dev}/   corpora
    data/languages.json                 emission models of both languages
    data/truth.tsv                      ground-truth symbol pairs
    asr.ckpt, ptn.ckpt                  stage 1 and stage 2 models
    mapping.tsv                         discovered mapping at the configured xi
    embeddings/{source,target}.ckpt     embedding matrices
    embeddings/transfer_report.json
    score.json                          mapping score against the truth
    reports/, logs/                     diagnostics
    manifests/<stage>.json              run manifests

Every artifact carries a provenance record: the stage that made it, the
config digest, the stage digest (the config sections it depends on) and the
SHA-256 of every input. A stage refuses upstream artifacts whose stage
digest differs from the current config, or whose recorded inputs no longer
match the files on disk.
"""

from __future__ import annotations

import hashlib
import json
import logging
import time
from pathlib import Path

import numpy as np
from filelock import FileLock, Timeout

from .. import __version__, kernels
from ..errors import DependencyError, IntegrityError, InvalidStateError
from ..evaluation import (
    evaluate_mapping,
    posteriorgram_report,
    random_baseline_recall,
    random_baseline_recall_mc,
)
from ..mapping import (
    EmbeddingMatrix,
    MappingTable,
    discover_mapping,
    parse_pair_table,
    separate_init,
    threshold_table,
    transfer_embeddings,
    unified_transfer,
)
from ..models.asr import CnnAsr
from ..models.checkpoint import load_checkpoint, save_checkpoint
from ..models.ptn import Ptn, ptn_forward
from ..models.training import AsrTrainConfig, PtnTrainConfig, train_asr, train_ptn
from ..synthlang import (
    GroundTruthMapping,
    LanguageSpec,
    SynthConfig,
    generate_corpus,
    generate_corpus_minutes,
    generate_language_pair,
    load_corpus,
    save_corpus,
)
from .config import config_digest, stage_digest

log = logging.getLogger(__name__)

STAGES = ("gen-data", "train-asr", "train-ptn", "discover-map", "transfer-embeddings", "eval-map")
_STAGE_STREAM = {name: k for k, name in enumerate(STAGES)}

CORPORA = ("source_train", "source_dev", "target_train", "target_dev")
LANGUAGES = "data/languages.json"
TRUTH = "data/truth.tsv"
ASR = "asr.ckpt"
PTN = "ptn.ckpt"
MAPPING = "mapping.tsv"
W_SRC = "embeddings/source.ckpt"
W_TGT = "embeddings/target.ckpt"
TRANSFER_REPORT = "embeddings/transfer_report.json"
SCORE = "score.json"


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def _header_lines(prov: dict) -> str:
    return f"# provenance={json.dumps(prov, sort_keys=True)}\n"


def _header_provenance(text: str):
    for line in text.splitlines():
        if line.startswith("# provenance="):
            return json.loads(line[len("# provenance="):])
    return None


class Run:
    """One configured pipeline run bound to its output directory."""

    def __init__(self, cfg: dict, out: str | Path | None = None):
        self.cfg = cfg
        self.out = Path(out if out is not None else cfg["output_dir"])
        self.config_digest = config_digest(cfg)
        self._digests = {}

    # -- paths, digests, provenance ---------------------------------------------

    def path(self, rel: str) -> Path:
        return self.out / rel

    def require(self, rel: str) -> Path:
        p = self.path(rel)
        if not p.exists():
            raise DependencyError(f"missing upstream artifact {p}; run the stage that produces it first", p)
        return p

    def digest(self, rel: str) -> str:
        """SHA-256 of a file, or of a corpus directory's manifest and feature files."""
        if rel not in self._digests:
            p = self.require(rel)
            h = hashlib.sha256()
            if p.is_dir():
                manifest = (p / "manifest.json").read_bytes()
                h.update((p / "inventory.txt").read_bytes())
                h.update(manifest)
                for u in json.loads(manifest)["utterances"]:
                    h.update((p / u["file"]).read_bytes())
            else:
                h.update(p.read_bytes())
            self._digests[rel] = h.hexdigest()
        return self._digests[rel]

    def forget(self, *rels) -> None:
        for rel in rels:
            self._digests.pop(rel, None)

    def provenance(self, stage: str, inputs=()) -> dict:
        return {
            "stage": stage,
            "config_digest": self.config_digest,
            "stage_digest": stage_digest(self.cfg, stage),
            "inputs": {rel: self.digest(rel) for rel in inputs},
        }

    def check(self, prov, stage: str, what: str) -> None:
        """Refuse an upstream artifact made under another config or from other inputs."""
        if not isinstance(prov, dict):
            raise IntegrityError(f"{what} carries no provenance record")
        want = stage_digest(self.cfg, stage)
        if prov.get("stage_digest") != want:
            raise IntegrityError(
                f"{what} was produced by {stage} under a different configuration "
                f"(stage digest {str(prov.get('stage_digest'))[:12]} != {want[:12]}); rerun {stage}")
        for rel, recorded in prov.get("inputs", {}).items():
            if self.digest(rel) != recorded:
                raise IntegrityError(f"{what} was built from a different {rel}; rerun the downstream stages")

    def seed(self, stage: str) -> np.random.SeedSequence:
        return np.random.SeedSequence([self.cfg["seed"], _STAGE_STREAM[stage]])

    def int_seed(self, stage: str) -> int:
        return int(self.seed(stage).generate_state(1)[0])

    def write_manifest(self, stage: str, inputs, outputs, wall: float, extra=None) -> None:
        self.forget(*outputs)
        body = {
            "stage": stage,
            "tool_version": __version__,
            "kernels": kernels.BACKEND,
            "seed": self.cfg["seed"],
            "config_digest": self.config_digest,
            "stage_digest": stage_digest(self.cfg, stage),
            "inputs": {rel: self.digest(rel) for rel in inputs},
            "outputs": {rel: self.digest(rel) for rel in outputs},
            "wall_time_s": round(wall, 3),
        }
        if extra:
            body.update(extra)
        _write_text(self.path(f"manifests/{stage}.json"), _dump(body))

    def lock(self) -> FileLock:
        self.out.mkdir(parents=True, exist_ok=True)
        return FileLock(str(self.out / ".phonmap.lock"), timeout=0)

    # -- shared loaders --------------------------------------------------------

    def languages(self):
        data = json.loads(self.require(LANGUAGES).read_text(encoding="utf-8"))
        self.check(data.get("provenance"), "gen-data", LANGUAGES)
        return LanguageSpec.from_dict(data["source"]), LanguageSpec.from_dict(data["target"])

    def corpus(self, name: str):
        rel = f"data/{name}"
        c = load_corpus(self.require(rel))
        self.check(c.metadata.get("provenance"), "gen-data", rel)
        return c

    def truth(self, src_inv, tgt_inv) -> GroundTruthMapping:
        text = self.require(TRUTH).read_text(encoding="utf-8")
        self.check(_header_provenance(text), "gen-data", TRUTH)
        return GroundTruthMapping.from_text(text, src_inv, tgt_inv)

    def checkpoint(self, rel: str, kind: str, stage: str):
        ckpt = load_checkpoint(self.require(rel), kind=kind)
        self.check(ckpt.metadata.get("provenance"), stage, rel)
        return ckpt

    def mapping(self, src_inv, tgt_inv) -> MappingTable:
        text = self.require(MAPPING).read_text(encoding="utf-8")
        table = MappingTable.from_text(text, src_inv, tgt_inv)
        self.check(table.metadata.get("provenance"), "discover-map", MAPPING)
        return table


# -- stages ------------------------------------------------------------------------


def gen_data(run: Run) -> dict:
    s = run.cfg["synthlang"]
    ss = run.seed("gen-data")
    lang_seed = int(ss.generate_state(1)[0])
    src, tgt, truth = generate_language_pair(SynthConfig(
        dim=s["dim"], n_src=s["n_src"], n_tgt=s["n_tgt"], overlap=s["overlap"], sigma=s["sigma"],
        duration=tuple(s["duration"]), mean_scale=s["mean_scale"], seed=lang_seed))
    rngs = [np.random.default_rng(c) for c in ss.spawn(4)]
    lens = tuple(s["utt_len"])
    corpora = {
        "source_train": generate_corpus_minutes(src, s["src_minutes"], lens, rngs[0], "src_train"),
        "source_dev": generate_corpus(src, s["src_dev_utts"], lens, rngs[1], "src_dev"),
        "target_train": generate_corpus_minutes(tgt, s["tgt_minutes"], lens, rngs[2], "tgt_train"),
        "target_dev": generate_corpus(tgt, s["tgt_dev_utts"], lens, rngs[3], "tgt_dev"),
    }
    prov = run.provenance("gen-data")
    outputs = []
    for name, corpus in corpora.items():
        corpus.metadata = {"provenance": prov, "minutes": corpus.minutes, "role": name}
        save_corpus(corpus, run.path(f"data/{name}"))
        outputs.append(f"data/{name}")
        log.info("%s: %d utterances, %.2f synthetic minutes", name, len(corpus), corpus.minutes)
    _write_text(run.path(LANGUAGES), _dump({"provenance": prov, "source": src.to_dict(), "target": tgt.to_dict()}))
    _write_text(run.path(TRUTH), _header_lines(prov) + truth.to_text(src.inventory, tgt.inventory))
    outputs += [LANGUAGES, TRUTH]
    return {"inputs": [], "outputs": outputs, "extra": {"truth_size": len(truth)}}


def train_asr_stage(run: Run) -> dict:
    a = run.cfg["asr"]
    inputs = ["data/source_train", "data/source_dev"]
    train, dev = run.corpus("source_train"), run.corpus("source_dev")
    conf = AsrTrainConfig(hidden=a["hidden"], blocks=a["blocks"], kernel=a["kernel"], epochs=a["epochs"],
                          patience=a["patience"], lr=a["lr"], seed=run.int_seed("train-asr"))
    result = train_asr(train, dev, conf, {"provenance": run.provenance("train-asr", inputs)})
    save_checkpoint(result.checkpoint, run.path(ASR))
    _write_text(run.path("logs/train-asr.json"), _dump(result.log))
    return {"inputs": inputs, "outputs": [ASR], "extra": {"best_epoch": result.best_epoch,
                                                         "skipped_utterances": result.skipped}}


def train_ptn_stage(run: Run) -> dict:
    p = run.cfg["ptn"]
    inputs = [ASR, "data/target_train", "data/target_dev"]
    asr_ckpt = run.checkpoint(ASR, "asr", "train-asr")
    frozen = asr_ckpt.tensor_digest()
    train, dev = run.corpus("target_train"), run.corpus("target_dev")
    conf = PtnTrainConfig(hidden=p["hidden"], dropout=p["dropout"], epochs=p["epochs"],
                          patience=p["patience"], lr=p["lr"], seed=run.int_seed("train-ptn"))
    result = train_ptn(asr_ckpt, train, dev, conf, {"provenance": run.provenance("train-ptn", inputs)})
    if asr_ckpt.tensor_digest() != frozen:
        raise InvalidStateError("ASR parameters changed during PTN training")
    save_checkpoint(result.checkpoint, run.path(PTN))
    _write_text(run.path("logs/train-ptn.json"), _dump(result.log))

    asr = CnnAsr.from_checkpoint(asr_ckpt)
    ptn = Ptn.from_checkpoint(result.checkpoint)
    src_dev = run.corpus("source_dev")
    src_posts = [asr.posteriorgram(u.features) for u in src_dev]
    tgt_posts = [ptn_forward(ptn, asr.posteriorgram(u.features)) for u in dev]
    _write_text(run.path("reports/posteriorgrams.json"), _dump({
        "asr_on_source_dev": posteriorgram_report(src_posts),
        "ptn_on_target_dev": posteriorgram_report(tgt_posts),
    }))
    return {"inputs": inputs, "outputs": [PTN],
            "extra": {"best_epoch": result.best_epoch, "asr_tensor_digest": frozen,
                      "skipped_utterances": result.skipped}}


def _inventories(run: Run):
    src, tgt = run.languages()
    return src.inventory, tgt.inventory


def discover_map_stage(run: Run) -> dict:
    m = run.cfg["mapping"]
    inputs = [PTN, LANGUAGES]
    src_inv, tgt_inv = _inventories(run)
    ptn = Ptn.from_checkpoint(run.checkpoint(PTN, "ptn", "train-ptn"))
    table = discover_mapping(ptn, src_inv, tgt_inv, m["xi"], m["smoothing"])
    table.metadata = {"provenance": run.provenance("discover-map", inputs), "xi": m["xi"],
                      "smoothing": m["smoothing"]}
    _write_text(run.path(MAPPING), table.to_text(src_inv, tgt_inv))
    n = sum(e is not None for e in table.entries)
    log.info("mapped %d of %d source symbols at xi=%g", n, len(src_inv), m["xi"])
    return {"inputs": inputs, "outputs": [MAPPING], "extra": {"n_mapped": n}}


def transfer_embeddings_stage(run: Run) -> dict:
    e = run.cfg["embedding"]
    src_inv, tgt_inv = _inventories(run)
    inputs = [LANGUAGES]
    src_rng, tgt_rng = [np.random.default_rng(s) for s in run.seed("transfer-embeddings").spawn(2)]
    outputs = [W_TGT, TRANSFER_REPORT]

    if e["source"] is not None:
        p = Path(e["source"])
        if not p.is_file():
            raise DependencyError(f"source embedding file {p} does not exist", p)
        W_src = EmbeddingMatrix.from_checkpoint(load_checkpoint(p, kind="embedding"))
        if W_src.digest != src_inv.digest:
            raise IntegrityError(f"{p} was built for a different source inventory")
        if W_src.dim != e["dim"]:
            raise IntegrityError(f"{p} has width {W_src.dim}, config asks for {e['dim']}")
    else:
        # stand-in for embeddings of a pretrained source model
        W_src = separate_init(src_inv, e["dim"], src_rng, e["std"])
        save_checkpoint(W_src.to_checkpoint({"provenance": run.provenance("transfer-embeddings", inputs),
                                             "role": "source"}), run.path(W_SRC))
        outputs.insert(0, W_SRC)

    strategy = e["strategy"]
    if strategy == "learned":
        inputs.append(MAPPING)
        table = run.mapping(src_inv, tgt_inv)
        W_tgt, report = transfer_embeddings(W_src, table, tgt_inv, tgt_rng, e["std"])
    elif strategy == "unified":
        if e["unified_table"] is not None:
            p = Path(e["unified_table"])
            if not p.is_file():
                raise DependencyError(f"unified table {p} does not exist", p)
            pairs = parse_pair_table(p.read_text(encoding="utf-8"), src_inv, tgt_inv)
        else:
            inputs.append(TRUTH)
            pairs = sorted(run.truth(src_inv, tgt_inv).pairs)
        W_tgt, report = unified_transfer(W_src, pairs, tgt_inv, tgt_rng, e["std"])
    else:
        W_tgt = separate_init(tgt_inv, e["dim"], tgt_rng, e["std"])
        report = None

    prov = run.provenance("transfer-embeddings", inputs)
    save_checkpoint(W_tgt.to_checkpoint({"provenance": prov, "role": "target", "strategy": strategy}),
                    run.path(W_TGT))
    body = json.loads(report.to_json()) if report is not None else {
        "strategy": "separate",
        "rows": [{"target": s, "init": "random", "source": None, "confidence": None} for s in tgt_inv.symbols]}
    body["provenance"] = prov
    _write_text(run.path(TRANSFER_REPORT), _dump(body))
    n_copied = sum(r["init"] == "copied" for r in body["rows"])
    log.info("%s: %d of %d target rows copied from source rows", strategy, n_copied, len(tgt_inv))
    return {"inputs": inputs, "outputs": outputs, "extra": {"strategy": strategy, "n_copied": n_copied}}


def score_report(score, trials: int, seed: int) -> dict:
    body = json.loads(score.to_json())
    if score.overlap_size >= 1:
        mc_mean, mc_se = random_baseline_recall_mc(score.overlap_size, trials, seed)
        body["random_baseline"] = {
            "recall": random_baseline_recall(score.overlap_size),
            "recall_mc": mc_mean, "recall_mc_stderr": mc_se, "trials": trials,
        }
    return body


def eval_map_stage(run: Run) -> dict:
    ev = run.cfg["evaluation"]
    src_inv, tgt_inv = _inventories(run)
    inputs = [MAPPING, TRUTH, PTN, LANGUAGES]
    table = run.mapping(src_inv, tgt_inv)
    truth = run.truth(src_inv, tgt_inv)
    score = evaluate_mapping(table, truth, src_inv)
    body = score_report(score, ev["baseline_trials"], run.int_seed("eval-map"))

    # threshold sweep from a fresh xi=0 probe of the same PTN
    ptn = Ptn.from_checkpoint(run.checkpoint(PTN, "ptn", "train-ptn"))
    full = discover_mapping(ptn, src_inv, tgt_inv, 0.0, run.cfg["mapping"]["smoothing"])
    if threshold_table(full, run.cfg["mapping"]["xi"]).entries != table.entries:
        raise IntegrityError(f"{MAPPING} does not match a fresh probe of {PTN}")
    sweep = []
    for xi in ev["xi_sweep"]:
        s = evaluate_mapping(threshold_table(full, xi), truth)
        sweep.append({"xi": xi, "n_predicted": s.n_predicted, "n_correct": s.n_correct,
                      "precision": s.precision, "recall": s.recall})
    body["xi"] = run.cfg["mapping"]["xi"]
    body["xi_sweep"] = sweep
    body["provenance"] = run.provenance("eval-map", inputs)
    _write_text(run.path(SCORE), _dump(body))
    log.info("precision %.3f recall %.3f (random baseline recall %.3f)", score.precision, score.recall,
             body.get("random_baseline", {}).get("recall", float("nan")))
    return {"inputs": inputs, "outputs": [SCORE],
            "extra": {"precision": score.precision, "recall": score.recall}}


STAGE_FUNCS = {
    "gen-data": gen_data,
    "train-asr": train_asr_stage,
    "train-ptn": train_ptn_stage,
    "discover-map": discover_map_stage,
    "transfer-embeddings": transfer_embeddings_stage,
    "eval-map": eval_map_stage,
}


def run_stage(run: Run, stage: str, locked: bool = False) -> dict:
    """Run one stage under the directory lock and write its run manifest."""
    if not locked:
        lock = run.lock()
        try:
            with lock:
                return run_stage(run, stage, locked=True)
        except Timeout:
            raise InvalidStateError(f"output directory {run.out} is in use by another run") from None
    log.info("stage %s (seed %d, config %s)", stage, run.cfg["seed"], run.config_digest[:12])
    t0 = time.perf_counter()
    info = STAGE_FUNCS[stage](run)
    run.write_manifest(stage, info["inputs"], info["outputs"], time.perf_counter() - t0, info.get("extra"))
    return info


def run_all(run: Run) -> dict:
    lock = run.lock()
    try:
        with lock:
            _write_text(run.path("config.json"), _dump(run.cfg))
            for stage in STAGES:
                run_stage(run, stage, locked=True)
    except Timeout:
        raise InvalidStateError(f"output directory {run.out} is in use by another run") from None
    return json.loads(run.path(SCORE).read_text(encoding="utf-8"))
