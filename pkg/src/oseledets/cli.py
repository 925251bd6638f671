"""Command-line entry point: ``oseledets <command> [flags]``."""

from __future__ import annotations

import argparse
import json
import sys
from typing import Sequence

from . import __version__
from .config import ConfigError, load_config
from .errors import OseledetsError, ParameterError
from .experiments import RUNNERS

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

# flag -> config key; values stay strings so the config parser does the typing
FLAGS = {
    "map": "map.family",
    "K": "map.K",
    "geometry": "map.geometry",
    "f": "map.f",
    "fx": "map.fx",
    "fy": "map.fy",
    "x0": "x0",
    "y0": "y0",
    "steps": "steps",
    "seed": "seed",
    "engine": "engine",
    "grid": "grid",
    "bins": "bins",
    "ensemble": "ensemble",
    "restarts": "restarts",
    "quantity": "quantity",
    "order": "order",
    "transient": "transient",
    "workers": "workers",
    "stride": "stride",
    "chunk": "chunk",
    "out": "out",
}

HELP = {
    "orbit": "per-step tangent records and the FTLE",
    "field": "phase-space means of lam1, ln kappa and theta",
    "joint": "joint and sign-conditional histograms",
    "split": "splitting angle by direct and grid methods",
    "converge": "ensemble decay of slope and curvature spreads",
    "approx": "continued-fraction approximant errors",
    "fixedpoints": "period-1 points and their spectra",
    "verify": "oracle cross-checks (exit 3 on failure)",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 already; keep the message on stderr
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key=value file; flags override it")
    for flag in FLAGS:
        common.add_argument(f"--{flag}", dest=flag, metavar=flag.upper() if len(flag) > 1 else flag)
    p = _Parser(prog="oseledets", description="Tangent-slope dynamics of planar maps.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, text in HELP.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {FLAGS[k]: v for k, v in vars(args).items() if k in FLAGS and v is not None}
    try:
        cfg = load_config(args.config, overrides)
    except (ConfigError, ParameterError) as exc:
        print(f"oseledets: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"oseledets: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        res = RUNNERS[args.command](cfg)
    except ParameterError as exc:
        print(f"oseledets: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"oseledets: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (OseledetsError, ArithmeticError, ValueError) as exc:
        print(f"oseledets: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    print(json.dumps({"command": res.command, "out": str(res.out), "ok": res.ok}, sort_keys=True))
    return EXIT_OK if res.ok else EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
