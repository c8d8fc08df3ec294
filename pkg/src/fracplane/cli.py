"""Command-line front end: ``fracplane <subcommand> --config <path> [--out <dir>]``.

Exit codes: 0 all enabled checks pass, 1 a check failed, 2 configuration
error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import sys

from . import __version__, config, pipeline
from .config import RunConfig
from .errors import CheckFailure, ConfigError, FracplaneError, NumericalFailure

SUBCOMMANDS = ("run", "assemble", "simulate", "sweep", "verify", "report")


def build_parser():
    ap = argparse.ArgumentParser(prog="fracplane", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"fracplane {__version__}")
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="flat key = value config file (defaults: flagship run)")
    ap.add_argument("--out", default="out", help="output directory (default: out)")
    ap.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def _config(args):
    cfg = config.load(args.config) if args.config else config.validate(RunConfig())
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.threads < 1:
        raise ConfigError("threads: must be at least 1")
    return cfg


def execute(args):
    cfg = _config(args)
    out, k = args.out, args.threads
    sub = args.subcommand
    if sub == "run":
        text = pipeline.run(cfg, out, k)
    elif sub == "assemble":
        pipeline.assemble(cfg, out, k)
        return 0
    elif sub == "simulate":
        pipeline.run_simulation(cfg, out, k)
        return 0
    elif sub == "sweep":
        pipeline.sweep(cfg, out, k)
        return 0
    elif sub == "verify":
        pipeline.verify(cfg, out, k)
        text = pipeline.report(cfg, out, k)
    else:
        text = pipeline.report(cfg, out, k)
    sys.stdout.write(text)
    bad = pipeline.failures(out)
    if bad:
        raise CheckFailure("failed checks: " + ", ".join(bad))
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return execute(args)
    except (ConfigError, NumericalFailure, CheckFailure) as exc:
        print(f"fracplane: {exc}", file=sys.stderr)
        return exc.exit_code
    except FracplaneError as exc:
        print(f"fracplane: {type(exc).__name__}: {exc}", file=sys.stderr)
        return NumericalFailure.exit_code


if __name__ == "__main__":
    sys.exit(main())
