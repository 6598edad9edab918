"""Command-line entry point.

``xrel <subcommand> --config <path|preset> --out <dir> [--seed N] [--threads N]``

Exit codes: 0 all verdicts pass, 1 some verdict fails, 2 configuration error,
3 solver non-convergence, 4 internal error.
"""
from __future__ import annotations

import argparse
import os
import platform
import sys
import time
import traceback
from datetime import datetime, timezone

import numpy as np

from .. import _kernels
from ..errors import ConfigError, ConvergenceError
from ..solver import set_workers
from .config import KINDS, dump_resolved, load_config, preset_names
from .experiments import RUNNERS, build_grid, build_manifold
from .output import write_outputs

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_INTERNAL = 0, 1, 2, 3, 4
THREADS_ENV = "XREL_THREADS"


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="xrel", description="Exact-relation experiments on periodic grids.")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        s = sub.add_parser(kind, help=f"run a {kind} experiment")
        s.add_argument("--config", required=True, help="config file or preset name")
        s.add_argument("--out", required=True, help="output directory")
        s.add_argument("--seed", type=int, default=None, help="override the config seed")
        s.add_argument("--threads", type=int, default=None, help=f"FFT threads (default ${THREADS_ENV} or 1)")
    sub.add_parser("presets", help="list the built-in presets")
    return p


def _threads(arg) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get(THREADS_ENV, "").strip()
    try:
        return max(1, int(env)) if env else 1
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None


def run(kind: str, config: str, out_dir: str, seed=None, threads=None) -> int:
    """Run one experiment and write its artifacts; returns the exit code."""
    t0 = time.perf_counter()
    started = datetime.now(timezone.utc).isoformat()
    try:
        n_threads = _threads(threads)
        cfg, base = load_config(config, kind, seed)
        spec = build_manifold(cfg, base) if kind != "milgrom" else None
        grid = build_grid(cfg, spec.tspec) if kind not in ("check-algebra", "laminate", "milgrom") else None
    except ConfigError as exc:
        print(f"xrel: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, TypeError) as exc:
        print(f"xrel: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    set_workers(n_threads)
    t1 = time.perf_counter()
    try:
        outcome = RUNNERS[kind](cfg, spec, grid)
    except ConfigError as exc:
        print(f"xrel: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"xrel: solver did not converge: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except Exception as exc:
        traceback.print_exc()
        print(f"xrel: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    t2 = time.perf_counter()
    passed = all(v["passed"] for v in outcome.verdicts)
    report = {
        "experiment": kind,
        "config": cfg,
        "passed": passed,
        "verdicts": outcome.verdicts,
        "criteria": sorted({v["criterion"] for v in outcome.verdicts}),
        "results": outcome.sections,
    }
    meta = {
        "started_utc": started,
        "timings_s": {"setup": t1 - t0, "run": t2 - t1},
        "threads": n_threads,
        "kernel_backend": _kernels.BACKEND,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    write_outputs(out_dir, report, dump_resolved(cfg), outcome.tables, outcome.fields, meta)
    for v in outcome.verdicts:
        print(f"[{'PASS' if v['passed'] else 'FAIL'}] criterion {v['criterion']} {v['name']}: "
              f"{v['value']!r} {v['relation']} {v['threshold']!r}")
    return EXIT_PASS if passed else EXIT_FAIL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "presets":
        print("\n".join(preset_names()))
        return EXIT_PASS
    return run(args.command, args.config, args.out, args.seed, args.threads)


if __name__ == "__main__":
    sys.exit(main())
