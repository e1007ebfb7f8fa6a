"""Command line: ``qidkit identify | sweep | figures``.

Exit codes: 0 success, 2 config error, 3 stage failure, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .config import RunConfig, load_config
from .errors import ConfigInvalid, MissingRawData, QidError, StageFailed
from .report import run_identify, write_csv, write_figures, write_identify_outputs

log = logging.getLogger("qidkit")

EXIT_OK, EXIT_CONFIG, EXIT_STAGE, EXIT_IO = 0, 2, 3, 4

SWEEP_HEADER = ["seed", "shots", "eta", "m", "status", "hs_error", "x_hat", "y_hat", "z_hat"]


def _fail(code: int, payload: dict) -> int:
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _failure_status(exc: QidError) -> str:
    if isinstance(exc, StageFailed):
        return f"{exc.stage}:m={exc.m}:ell={exc.ell}:{type(exc.cause).__name__}"
    return type(exc).__name__


def _sweep_cell(cfg: RunConfig, seed: int, shots: int, eta: float) -> list[list]:
    """CSV rows for one (seed, shots, eta) cell; a failed run yields rows with empty values."""
    cell = cfg.with_overrides(mode="sampled", seed=seed, shots=shots, eta=eta, keep_raw=False)
    try:
        im, _ = run_identify(cell)
    except QidError as exc:
        status = _failure_status(exc)
        return [[seed, shots, float(eta), m, status, "", "", "", ""]
                for m in range(cfg.model.n_controls + 1)]
    vectors = [im.d0_hat, *im.dm_hat]
    return [[seed, shots, float(eta), m, "ok", err, *map(float, v)]
            for m, (err, v) in enumerate(zip(im.hs_errors, vectors))]


def sweep_workers() -> int:
    raw = os.environ.get("QIDKIT_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    return max(0, int(raw))


def run_sweep(cfg: RunConfig, out: Path, workers: int | None = None) -> tuple[Path, int]:
    """Write sweep.csv; returns its path and the number of failed cells."""
    if cfg.sweep is None:
        raise ConfigInvalid("config has no 'sweep' section")
    cells = cfg.sweep.cells()
    workers = sweep_workers() if workers is None else workers
    if workers == 0 or len(cells) == 1:
        results = [_sweep_cell(cfg, *c) for c in cells]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(cells))) as pool:
            # map() yields in submission order, so rows stay deterministic
            results = list(pool.map(_sweep_cell, [cfg] * len(cells), *zip(*cells)))
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    rows = [row for cell_rows in results for row in cell_rows]
    write_csv(path, SWEEP_HEADER, rows)
    return path, sum(1 for r in rows if r[3] == 0 and r[4] != "ok")


def cmd_identify(args) -> int:
    cfg = load_config(args.config).with_overrides(mode=args.mode, seed=args.seed,
                                                  keep_raw=args.keep_raw or None)
    im, handle = run_identify(cfg)
    report = write_identify_outputs(Path(args.out), cfg, im, handle)
    summary = {"hs_errors": report.get("hs_errors"), "cost": report["cost"],
               "out": str(args.out)}
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    path, failed = run_sweep(cfg, Path(args.out))
    if failed:
        log.warning("%d sweep cell(s) failed; see the status column of %s", failed, path)
    print(json.dumps({"failed_cells": failed, "sweep_csv": str(path)}, sort_keys=True))
    return EXIT_OK


def cmd_figures(args) -> int:
    paths = write_figures(Path(args.run))
    print(json.dumps({"figures": [str(p) for p in paths]}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qidkit",
        description="Identify free and control Hamiltonians of a simulated qubit from sigma_z data.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("identify", help="Run one end-to-end identification.")
    p.add_argument("--config", required=True, metavar="JSON")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--mode", choices=["exact", "sampled"], default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--keep-raw", action="store_true", help="retain scans for 'figures'")
    p.set_defaults(func=cmd_identify)

    p = sub.add_parser("sweep", help="Monte Carlo sweep over seeds, shots and eta.")
    p.add_argument("--config", required=True, metavar="JSON")
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("figures", help="Write figure CSVs from an identify --keep-raw run.")
    p.add_argument("--run", required=True, metavar="DIR")
    p.set_defaults(func=cmd_figures)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        return _fail(EXIT_CONFIG, {"error": "ConfigInvalid", "message": str(exc)})
    except StageFailed as exc:
        return _fail(EXIT_STAGE, exc.as_dict())
    except MissingRawData as exc:
        return _fail(EXIT_IO, {"error": "MissingRawData", "message": str(exc)})
    except QidError as exc:
        return _fail(EXIT_STAGE, {"error": type(exc).__name__, "message": str(exc)})
    except OSError as exc:
        return _fail(EXIT_IO, {"error": "IoError", "message": str(exc)})


if __name__ == "__main__":
    sys.exit(main())
