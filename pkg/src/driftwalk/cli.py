"""``driftwalk`` command line.

Exit codes: 0 pass, 1 fail, 2 config error, 3 numerical error.
"""

import argparse
import sys

from .config import load_config, parse_config
from .exceptions import (
    CensoringError,
    ConfigParseError,
    DominanceGapError,
    ExplosionError,
    NumericalRankError,
)
from .experiments import run

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

SIMPLE = ("simulate", "returns", "mass-profile", "occupation", "sd-check", "lyapunov", "drift-eval",
          "drift-check", "equidistribute")


def _globals(p):
    p.add_argument("--config", metavar="PATH", help="experiment config file")
    p.add_argument("--seed", type=int, metavar="N", help="seed (overrides the config)")
    p.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")


def build_parser():
    parser = argparse.ArgumentParser(prog="driftwalk", description="Seeded drift and recurrence experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SIMPLE:
        _globals(sub.add_parser(name))
    ce = sub.add_parser("counterexample")
    ce.add_argument("which", choices=["mass", "empirical"])
    _globals(ce)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    kind = f"counterexample-{args.which}" if args.command == "counterexample" else args.command
    overrides = {"seed": args.seed, "out": args.out}
    try:
        if args.config:
            cfg = load_config(args.config, overrides=overrides)
            if cfg.kind != kind:
                raise ConfigParseError(f"config kind {cfg.kind!r} does not match subcommand {kind!r}", key="kind")
        else:
            cfg = parse_config("", overrides={"kind": kind, **overrides})
        summary = run(cfg)
    except ConfigParseError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalRankError, ExplosionError, CensoringError, DominanceGapError, FloatingPointError) as exc:
        print(f"numerical error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    sys.stdout.write(summary.render())
    return EXIT_PASS if summary.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
