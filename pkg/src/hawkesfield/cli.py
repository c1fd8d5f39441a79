"""Command-line entry point.

Exit codes: 0 success, 2 config error, 3 numerical failure
(non-convergence or explosion guard).
"""

from __future__ import annotations

import argparse
import sys

from .experiments import (
    cmd_chaos_study,
    cmd_converge_study,
    cmd_quantize,
    cmd_simulate,
    cmd_solve_limit,
    cmd_verify,
    load_config,
)
from .limitfield import NonConvergenceError
from .model import ConfigError
from .simulate import ExplosionError

_COMMANDS = {
    "simulate": cmd_simulate,
    "solve-limit": cmd_solve_limit,
    "quantize": cmd_quantize,
    "converge-study": cmd_converge_study,
    "chaos-study": cmd_chaos_study,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hawkesfield",
        description="Spatially structured spiking-network simulations and "
                    "their mean-field limit diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in _COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__.splitlines()[0] if fn.__doc__ else None)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed_override=args.seed)
        written = _COMMANDS[args.command](cfg, args.out, jobs=max(1, args.jobs))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (NonConvergenceError, ExplosionError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    for path in written:
        print(path)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
