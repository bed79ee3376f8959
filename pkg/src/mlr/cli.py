"""Command line front end.

``mlr gen KIND:k=v,... OUT`` writes a generated matrix.
``mlr run (--input FILE | --gen KIND:k=v,...) --rank R --out DIR`` fits and
writes ``report.json``, ``trajectory.csv``, ``ranks.csv`` and ``mlr.bin``
(plus ``lr.json`` / ``lrd.json`` with ``--baselines``).

Exit codes: 0 success, 2 bad configuration or input, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import storage_count
from .exceptions import MlrError, NumericalFailure
from .io import load_matrix, read_mlr, read_partition, save_matrix, write_mlr
from .matrices import GeneratorSpec
from .pipeline import MODES, baseline_lr, baseline_lrd, fit

log = logging.getLogger("mlr")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


@dataclass
class RunConfig:
    rank: int
    out: Path
    input: Path | None = None
    gen: str | None = None
    mode: str = "full_fit"
    kind: str = "general"
    init: str = "uniform"
    init_file: Path | None = None
    eps_rel: float | None = None
    eps_alloc: float = 1e-3
    epochs: int = 100
    q: int = 1
    levels: int | None = None
    partition: Path | None = None
    max_swaps: int = 5000
    method: str = "bcd"
    seed: int = 0
    baselines: bool = False

    def __post_init__(self):
        if (self.input is None) == (self.gen is None):
            raise ValueError("give exactly one of --input and --gen")
        if self.rank < 1:
            raise ValueError("--rank must be at least 1")
        if self.init == "file" and self.init_file is None:
            raise ValueError("--init file needs --init-file")


def _matrix(cfg: RunConfig) -> np.ndarray:
    if cfg.input is not None:
        return load_matrix(cfg.input)
    return GeneratorSpec.parse(cfg.gen, seed=cfg.seed).generate()


def _write_trajectory(path: Path, report, num_levels: int) -> None:
    marks = set(report.exchanges)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "rel_error", "exchange"] + [f"r_{l + 1}" for l in range(num_levels)])
        for t, (err, ranks) in enumerate(zip(report.rel_errors, report.ranks)):
            ranks = list(ranks) + [0] * (num_levels - len(ranks))
            w.writerow([t, repr(err), int(t in marks)] + ranks)


def _write_ranks(path: Path, report, num_levels: int) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step"] + [f"r_{l + 1}" for l in range(num_levels)] + ["rel_error"])
        for step, (ranks, err) in enumerate(report.allocations):
            w.writerow([step] + list(ranks) + [repr(err)])


def run(cfg: RunConfig) -> int:
    """Execute one run; returns the process exit code."""
    try:
        A = _matrix(cfg)
        partition = read_partition(cfg.partition) if cfg.partition else None
        warm = read_mlr(cfg.init_file) if cfg.init == "file" else None
        eps = cfg.eps_rel if cfg.eps_rel is not None else 0.01
        mlr, report = fit(
            A, cfg.rank, kind=cfg.kind, mode=cfg.mode,
            init="uniform" if cfg.init == "file" else cfg.init,
            levels=cfg.levels, partition=partition, mlr=warm, eps_rel=eps,
            eps_alloc=cfg.eps_alloc, max_epochs=cfg.epochs, q=cfg.q,
            max_swaps=cfg.max_swaps, method=cfg.method,
        )
    except NumericalFailure as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (MlrError, ValueError, OSError, KeyError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG

    out = cfg.out
    out.mkdir(parents=True, exist_ok=True)
    L = mlr.num_levels
    write_mlr(out / "mlr.bin", mlr)
    _write_trajectory(out / "trajectory.csv", report, L)
    _write_ranks(out / "ranks.csv", report, L)
    summary = {
        "mode": cfg.mode,
        "kind": mlr.kind,
        "rank": int(mlr.rank),
        "ranks": [int(r) for r in mlr.ranks],
        "levels": L,
        "shape": list(A.shape),
        "final_rel_error": report.final_error,
        "storage": storage_count(mlr),
        "termination": report.termination,
        "epochs": report.epochs_run,
        "exchanges": len(report.exchanges),
        "wall_time": report.wall_time,
    }
    if cfg.baselines:
        lr = baseline_lr(A, mlr.rank)
        (out / "lr.json").write_text(json.dumps({"rank": int(mlr.rank), "rel_error": lr}))
        summary["lr_rel_error"] = lr
        if A.shape[0] == A.shape[1] and np.allclose(A, A.T, rtol=0, atol=1e-8 * np.abs(A).max()):
            lrd = baseline_lrd(A, mlr.rank)
            (out / "lrd.json").write_text(json.dumps({"rank": int(mlr.rank), "rel_error": lrd}))
            summary["lrd_rel_error"] = lrd
    (out / "report.json").write_text(json.dumps(summary, indent=2))
    log.info("relative error %.6g, storage %d", report.final_error, summary["storage"])
    return EXIT_OK


def gen(spec: str, out: Path, seed: int = 0) -> int:
    try:
        A = GeneratorSpec.parse(spec, seed=seed).generate()
        save_matrix(out, A)
    except (ValueError, KeyError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    p = argparse.ArgumentParser(prog="mlr", description="Multilevel low rank matrix fitting")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a test matrix")
    g.add_argument("spec", help="KIND:key=value,... e.g. fiedler:n=512")
    g.add_argument("out", type=Path, help="output file (.csv, .npy, otherwise DMAT)")
    g.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("run", parents=[common], help="fit an MLR approximation")
    src = r.add_mutually_exclusive_group(required=True)
    src.add_argument("--input", type=Path)
    src.add_argument("--gen")
    r.add_argument("--rank", type=int, required=True)
    r.add_argument("--out", type=Path, required=True)
    r.add_argument("--mode", choices=MODES, default="full_fit")
    r.add_argument("--kind", choices=("general", "symmetric", "psd"), default="general")
    r.add_argument("--init", choices=("bottom", "uniform", "top", "file"), default="uniform")
    r.add_argument("--init-file", type=Path, help="MLR1 file to warm start from (--init file)")
    r.add_argument("--eps-rel", type=float, help="factor fitting tolerance (default 0.01)")
    r.add_argument("--eps-alloc", type=float, default=1e-3,
                   help="rank allocation tolerance (default 0.001)")
    r.add_argument("--epochs", type=int, default=100, help="maximum BCD epochs per fit")
    r.add_argument("--q", type=int, default=1, help="rank units moved per exchange")
    r.add_argument("--levels", type=int)
    r.add_argument("--partition", type=Path, help="partition JSON file")
    r.add_argument("--max-swaps", type=int, default=5000)
    r.add_argument("--method", choices=("bcd", "als"), default="bcd")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--baselines", action="store_true", help="also write lr.json and lrd.json")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    if args.command == "gen":
        return gen(args.spec, args.out, args.seed)
    try:
        cfg = RunConfig(
            rank=args.rank, out=args.out, input=args.input, gen=args.gen, mode=args.mode,
            kind=args.kind, init=args.init, init_file=args.init_file, eps_rel=args.eps_rel,
            eps_alloc=args.eps_alloc, epochs=args.epochs, q=args.q, levels=args.levels,
            partition=args.partition, max_swaps=args.max_swaps, method=args.method,
            seed=args.seed, baselines=args.baselines,
        )
    except ValueError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
