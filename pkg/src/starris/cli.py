"""Command line driver.

Exit codes: 0 success, 1 config error, 2 unconverged solve under
``--strict``, 3 oracle budget exceeded, 4 failed self-check.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .experiments import (
    ConfigError,
    ExperimentConfig,
    load_config,
    oracle_experiment,
    run_experiment,
    trace_experiment,
)
from .star_mode import TooLarge

log = logging.getLogger("starris")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED, EXIT_BUDGET, EXIT_VERIFY = 0, 1, 2, 3, 4


def _common(p):
    p.add_argument("--config", type=Path, help="JSON experiment config (defaults apply when omitted)")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", type=Path, help="output directory (overrides output_dir)")
    p.add_argument("--strict", action="store_true", help="exit 2 if any solve hits the penalty round cap")
    p.add_argument("--workers", type=int, default=1, help="worker processes for independent trials")


def build_parser():
    ap = argparse.ArgumentParser(prog="starris", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("run", "solve every configured case, sweep value and trial"),
        ("sweep", "like run, but a sweep block is required"),
        ("compare-modes", "all eight models on the configured scenario"),
        ("oracle-compare", "discrete MS solver against exhaustive search"),
    ):
        _common(sub.add_parser(name, help=help_))
    p = sub.add_parser("trace", help="per-pass convergence trace of one solve")
    _common(p)
    p.add_argument("--case", type=int, help="case index (default: first configured case)")
    p.add_argument("--trial", type=int, default=0)
    p = sub.add_parser("verify", help="run the oracle self-checks")
    p.add_argument("--full", action="store_true", help="full-size checks instead of the quick pass")
    return ap


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed: must be nonnegative")
        cfg.seed = args.seed
    if args.out is not None:
        cfg.output_dir = str(args.out)
    return cfg


def _verify(full: bool) -> int:
    from .verify import run_all

    results = run_all(quick=not full)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command == "verify":
        return _verify(args.full)
    try:
        cfg = _load(args)
        out = Path(cfg.output_dir)
        if args.command == "sweep" and cfg.sweep is None:
            raise ConfigError("sweep: the sweep subcommand needs a sweep block")
        if args.command == "trace":
            if args.case is not None and args.case not in range(1, 9):
                raise ConfigError("--case: must be in 1..8")
            res = trace_experiment(cfg, out, args.case, args.trial)
            results = [res]
            print(f"trace: {res['i_bcd']} passes over {res['i_pen']} rounds -> {out / 'trace.csv'}")
        elif args.command == "oracle-compare":
            results = oracle_experiment(cfg, out, args.workers)
            gaps = [r["gap"] for r in results]
            print(f"oracle-compare: {len(results)} trials, mean gap {sum(gaps) / len(gaps):.4%} -> {out}")
        else:
            cases = list(range(1, 9)) if args.command == "compare-modes" else None
            if args.command == "compare-modes":
                cfg.sweep = None
            results = run_experiment(cfg, out, args.command, cases, args.workers)
            print(f"{args.command}: {len(results)} solves -> {out / 'aggregate.csv'}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TooLarge as exc:
        print(f"oracle budget exceeded: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    stalled = sum(not r["converged"] for r in results)
    if stalled:
        log.warning("%d solve(s) hit the penalty round cap", stalled)
        if args.strict:
            return EXIT_NOT_CONVERGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
