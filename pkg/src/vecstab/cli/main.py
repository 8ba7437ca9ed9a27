"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 internal
invariant violation. Failures print one JSON object on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

import numba

from ..filtered import FilterError
from ..generators import GeneratorError
from ..index import SearchIndexError, load_index
from ..index.storage import MAGIC as INDEX_MAGIC
from ..stability import StabilityError
from ..validators import ValidationError
from ..vectors import VectorError
from . import io
from .config import MAX_SEED, ConfigError, load_config
from .report import InvariantError, to_csv
from .runner import generate, run

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INTERNAL = 4

REPORT_COMMANDS = ("sweep", "multivec", "filtered", "sparse", "recall", "validate")


def _seed(text: str) -> int:
    try:
        v = int(text, 10)
    except ValueError:
        raise argparse.ArgumentTypeError(f"seed must be an integer, got {text!r}") from None
    if not 0 <= v <= MAX_SEED:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON experiment configuration")
    common.add_argument("--seed", type=_seed, help="override the configured seed")
    common.add_argument("--out", type=Path, help="output path (CSV for reports; data file for gen)")
    common.add_argument("--deterministic", action="store_true", help="omit the timestamp line from CSV output")
    common.add_argument("--threads", type=int, help="worker threads for compiled kernels")

    parser = _Parser(prog="vecstab", description="Stability diagnostics for near-neighbor search.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in REPORT_COMMANDS:
        sub.add_parser(name, parents=[common], help=f"run a {name} experiment and write a CSV report")
    sub.add_parser("gen", parents=[common], help="write a synthetic dataset to --out")
    ins = sub.add_parser("inspect", help="describe a data or index file")
    ins.add_argument("path", type=Path)
    return parser


def _apply_threads(n: int | None) -> None:
    if n is None:
        return
    if not 1 <= n <= numba.config.NUMBA_NUM_THREADS:
        raise ConfigError(f"--threads must lie in [1, {numba.config.NUMBA_NUM_THREADS}]")
    numba.set_num_threads(n)


def _load(args) -> object:
    if args.config is None:
        raise ConfigError("--config is required")
    cfg = load_config(args.config, kind=args.command)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out"] = str(args.out)
    return dataclasses.replace(cfg, **updates) if updates else cfg


def describe(path: Path) -> dict:
    """Format, count and dimension of a file the toolkit can read."""
    try:
        head = path.read_bytes()[:8]
    except OSError as exc:
        raise io.DataError(f"{path}: {exc.strerror or exc}") from exc
    if head == INDEX_MAGIC:
        try:
            idx = load_index(path)
        except SearchIndexError as exc:
            raise io.DataError(str(exc)) from exc
        kind = "ivf" if hasattr(idx, "lists") else "graph"
        info = {"format": "VSLIDX1", "index": kind, "count": int(idx.data.shape[0]), "dim": int(idx.data.shape[1])}
        info["metric"] = str(idx.metric)
        if kind == "ivf":
            info["nlist"] = idx.nlist
        else:
            info.update(M=idx.M, max_level=idx.max_level, entry=idx.entry)
        return info
    if head[:4] == io.VSD_MAGIC or io.is_fvecs(path):
        a = io.read_dense(path)
        return {"format": "fvecs" if io.is_fvecs(path) else "VSD1", "count": a.shape[0], "dim": a.shape[1]}
    first = json.loads(path.read_text(encoding="utf-8").split("\n", 1)[0] or "null")
    if isinstance(first, dict) and "vectors" in first:
        sets, _ = io.read_sets(path)
        return {"format": "sets", "count": len(sets), "dim": int(sets[0].shape[1]),
                "vectors": int(sum(len(s) for s in sets))}
    if isinstance(first, dict) and "attrs" in first:
        return {"format": "attrs", "count": len(io.read_attrs(path))}
    if isinstance(first, dict) and "indices" in first:
        vecs, _ = io.read_sparse(path)
        return {"format": "sparse", "count": len(vecs), "dim": int(vecs[0].dim),
                "mean_nnz": float(sum(v.nnz for v in vecs) / len(vecs))}
    raise io.DataError(f"{path}: unrecognised file format")


def _dispatch(args) -> int:
    if args.command == "inspect":
        try:
            info = describe(args.path)
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise io.DataError(f"{args.path}: unrecognised file format") from exc
        print(json.dumps(info, sort_keys=True))
        return EXIT_OK
    _apply_threads(args.threads)
    cfg = _load(args)
    if args.command == "gen":
        if cfg.out is None:
            raise ConfigError("gen needs an output path (--out or config 'out')")
        for p in generate(cfg, cfg.out):
            print(p)
        return EXIT_OK
    result = run(cfg)
    text = to_csv(result.rows, deterministic=args.deterministic)
    for msg in result.messages:
        print(json.dumps({"warning": msg}), file=sys.stderr)
    for label, v in result.verdicts().items():
        print(json.dumps({"verdict": v.evidence.value, "label": label, "note": v.note}), file=sys.stderr)
    if cfg.out is None:
        sys.stdout.write(text)
    else:
        with open(cfg.out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    return EXIT_OK


def _fail(code: int, kind: str, exc: BaseException) -> int:
    print(json.dumps({"error": kind, "message": str(exc), "exit_code": code}), file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return _dispatch(args)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except GeneratorError as exc:
        return _fail(EXIT_CONFIG, "config", exc)
    except (io.DataError, VectorError, FilterError, StabilityError, ValidationError, SearchIndexError, OSError) as exc:
        return _fail(EXIT_DATA, "data", exc)
    except InvariantError as exc:
        return _fail(EXIT_INTERNAL, "invariant", exc)
    except Exception as exc:  # noqa: BLE001 - anything unexpected is an internal fault
        return _fail(EXIT_INTERNAL, "internal", exc)

