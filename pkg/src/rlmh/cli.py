"""Command-line entry point.

Subcommands::

    rlmh run <config>       run the configured method(s) for every seed
    rlmh compare <config>   run rlmh, arwmh and amala side by side
    rlmh policy-slice <checkpoint> --grid a:b:n

``--seed`` replaces the configured seed list with a single seed,
``--out-dir`` overrides the output directory and ``--preset`` picks the
paper-scale or smoke (10%) iteration counts.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import METHODS, PRESETS, ConfigError, parse_config
from .harness import SUMMARY_COLUMNS, emit_policy_slice, parse_grid, run_experiment
from .policy import load_policy


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rlmh", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (("run", "run the configured methods"),
                            ("compare", "run all methods on the same target and seeds")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("config", type=Path, help="TOML or JSON experiment file")
        p.add_argument("--seed", type=int, action="append", default=None,
                       help="seed to run (repeatable); replaces the configured list")
        p.add_argument("--out-dir", type=Path, default=None)
        p.add_argument("--preset", choices=PRESETS, default=None)
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("policy-slice", help="tabulate x -> phi(x) for a checkpoint")
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--grid", required=True, help="a:b:n, per axis")
    p.add_argument("--out", type=Path, default=None, help="output CSV (default: stdout)")
    return parser


def _print_summary(result, stream):
    stream.write(",".join(SUMMARY_COLUMNS) + "\n")
    stream.write(result.summary_path.read_text().split("\n", 1)[1])


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "policy-slice":
            text = emit_policy_slice(load_policy(args.checkpoint), parse_grid(args.grid))
            if args.out is None:
                sys.stdout.write(text)
            else:
                args.out.write_text(text, encoding="utf-8", newline="")
            return 0
        cfg = parse_config(args.config, preset=args.preset)
        methods = list(METHODS) if args.command == "compare" else None
        result = run_experiment(cfg, out_dir=args.out_dir, methods=methods, seeds=args.seed,
                                jobs=args.jobs)
        _print_summary(result, sys.stdout)
        return 0
    except (ConfigError, FileNotFoundError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
