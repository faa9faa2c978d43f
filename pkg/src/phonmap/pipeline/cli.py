"""``phonmap`` command-line entry point.

Diagnostics go to stderr. Artifacts go to the output directory; ``eval-map``
and ``run-all`` also print the score JSON on stdout. Exit status is 0 on
success, 2 for bad configuration or arguments, 3 for a missing upstream
artifact, 4 for an integrity failure and 1 for any other error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .. import __version__
from ..errors import ConfigError, DependencyError, IntegrityError, InvalidArgumentError, PhonmapError
from ..evaluation import evaluate_mapping
from ..inventory import SymbolInventory
from ..mapping import MappingTable
from ..synthlang import GroundTruthMapping
from .config import load_config
from .stages import Run, run_all, run_stage, score_report

log = logging.getLogger("phonmap")

EXIT_CODES = ((ConfigError, 2), (InvalidArgumentError, 2), (DependencyError, 3), (IntegrityError, 4))


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="JSON config file")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides output_dir)")
    p.add_argument("--seed", type=int, help="global seed (overrides config and PHONMAP_SEED)")
    p.add_argument("--set", dest="sets", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config value, e.g. --set asr.epochs=5 (repeatable)")
    p.add_argument("-q", "--quiet", action="store_true", help="only warnings and errors on stderr")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="phonmap", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"phonmap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (("gen-data", "generate a synthetic language pair and its corpora"),
                       ("train-asr", "train the source-language CTC acoustic model"),
                       ("train-ptn", "train the PTN on the target language against the frozen ASR"),
                       ("run-all", "run every stage in order and report the mapping score")):
        _common(sub.add_parser(name, help=text))

    p = sub.add_parser("discover-map", help="probe the PTN and write the thresholded mapping table")
    _common(p)
    p.add_argument("--xi", type=float, help="transformation threshold")
    p.add_argument("--smoothing", type=float, help="mix the one-hot probe with uniform (0 = plain one-hot)")

    p = sub.add_parser("transfer-embeddings", help="initialize target symbol embeddings")
    _common(p)
    p.add_argument("--strategy", choices=("separate", "unified", "learned"))
    p.add_argument("--dim", type=int, help="embedding width")
    p.add_argument("--src-embeddings", metavar="PATH", help="source embedding checkpoint")
    p.add_argument("--unified-table", metavar="PATH", help="handcrafted '<src>\\t<tgt>' table")

    p = sub.add_parser("eval-map", help="score a mapping table against the reference pairs")
    _common(p)
    p.add_argument("--predicted", metavar="PATH", help="mapping table to score (standalone mode)")
    p.add_argument("--reference", metavar="PATH", help="reference '<src>\\t<tgt>' pairs")
    p.add_argument("--src-inventory", metavar="PATH", help="source inventory, one symbol per line")
    p.add_argument("--tgt-inventory", metavar="PATH", help="target inventory, one symbol per line")

    p = sub.add_parser("gradcheck", help="finite-difference check of every layer and the full stack")
    _common(p)
    return parser


def _config(args) -> dict:
    overrides = {"seed": args.seed, "output_dir": args.out}
    if args.command == "discover-map":
        overrides.update({"mapping.xi": args.xi, "mapping.smoothing": args.smoothing})
    elif args.command == "transfer-embeddings":
        overrides.update({"embedding.strategy": args.strategy, "embedding.dim": args.dim,
                          "embedding.source": args.src_embeddings, "embedding.unified_table": args.unified_table})
    return load_config(args.config, overrides, args.sets)


def _standalone_eval(args, cfg) -> int:
    paths = {k: getattr(args, k) for k in ("predicted", "reference", "src_inventory", "tgt_inventory")}
    missing = [f"--{k.replace('_', '-')}" for k, v in paths.items() if v is None]
    if missing:
        raise InvalidArgumentError(f"standalone eval-map also needs {', '.join(missing)}")
    for k, v in paths.items():
        if not Path(v).is_file():
            raise DependencyError(f"{v} does not exist", v)
    src = SymbolInventory.load(paths["src_inventory"])
    tgt = SymbolInventory.load(paths["tgt_inventory"])
    table = MappingTable.from_text(Path(paths["predicted"]).read_text(encoding="utf-8"), src, tgt)
    truth = GroundTruthMapping.from_text(Path(paths["reference"]).read_text(encoding="utf-8"), src, tgt)
    score = evaluate_mapping(table, truth, src)
    body = score_report(score, cfg["evaluation"]["baseline_trials"], cfg["seed"])
    text = json.dumps(body, sort_keys=True, indent=1) + "\n"
    if args.out is not None:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "score.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    log.info("precision %.4g recall %.4g", score.precision, score.recall)
    return 0


def _gradcheck(cfg) -> int:
    from ..gradsuite import run_suite

    results = run_suite(cfg["seed"])
    for r in results:
        log.info("%-20s max rel err %.3e (tol %.0e) %s", r.name, r.max_rel_error, r.tolerance,
                 "ok" if r.passed else "FAIL")
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    body = {"seed": cfg["seed"], "checks": [r.to_dict() for r in results],
            "passed": all(r.passed for r in results)}
    (out / "gradcheck.json").write_text(json.dumps(body, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return 0 if body["passed"] else 1


def dispatch(args) -> int:
    cfg = _config(args)
    if args.command == "gradcheck":
        return _gradcheck(cfg)
    if args.command == "eval-map" and args.predicted is not None:
        return _standalone_eval(args, cfg)
    run = Run(cfg)
    if args.command == "run-all":
        body = run_all(run)
        sys.stdout.write(json.dumps(body, sort_keys=True, indent=1) + "\n")
        return 0
    run_stage(run, args.command)
    if args.command == "eval-map":
        sys.stdout.write(run.path("score.json").read_text(encoding="utf-8"))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s", force=True)
    try:
        return dispatch(args)
    except PhonmapError as exc:
        log.error("%s", exc)
        for cls, code in EXIT_CODES:
            if isinstance(exc, cls):
                return code
        return 1
