"""Command-line front door.

One subcommand per experiment; each takes a scenario file and optional
overrides.  Exit status is 0 iff all asserted verdicts in the run pass.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigurationError, LatticeRefusal, NumericError
from .scenario import _EXPERIMENTS, run_scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffgame",
        description=(
            "Simulator and verification harness for public-signal correlated "
            "equilibria in two-player differential games."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", required=True, help="scenario TOML file")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--threads", type=int, default=1, help="worker cap")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return run_scenario(
            args.config,
            out_dir=args.out,
            seed=args.seed,
            threads=args.threads,
            experiment=args.command,
        )
    except (ConfigurationError, LatticeRefusal, NumericError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
