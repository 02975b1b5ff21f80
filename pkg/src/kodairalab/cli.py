"""Command line: ``kodairalab run <config>`` and ``kodairalab verify <suite>``.

Exit codes: 0 success, 1 acceptance failure, 2 config error.
"""

from __future__ import annotations

import argparse
import sys

from .config import ConfigError, load_config
from .zeros import UnsupportedRegimeError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kodairalab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment config")
    run.add_argument("config")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out")
    ver = sub.add_parser("verify", help="run the acceptance battery")
    ver.add_argument("suite", choices=("fast", "full"))
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--workers", type=int, default=1)
    ver.add_argument("--out", help="directory for per-criterion CSV outputs")
    ver.add_argument("--only", help="comma separated criterion numbers")
    return ap


def cmd_run(args) -> int:
    from .config import validate
    from .experiments import run

    try:
        cfg = load_config(args.config)
        cfg = cfg.with_overrides(seed=args.seed, workers=args.workers, out=args.out)
        validate(cfg, args.config)
        rec, csv_path, json_path = run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except UnsupportedRegimeError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    print(f"{cfg.experiment}: {len(rec.rows)} rows in {rec.wall_time:.1f} s")
    print(f"  {csv_path}\n  {json_path}")
    return 0


def cmd_verify(args) -> int:
    from .acceptance import run_suite

    only = None
    if args.only:
        only = {int(t) for t in args.only.split(",") if t.strip()}
    results = run_suite(args.suite, seed=args.seed, workers=args.workers, out=args.out,
                        only=only, stream=sys.stdout)
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return cmd_run(args)
    return cmd_verify(args)
