"""Command-line entry point.

    tomobench fig1 --seed 42 --trials 50 --out-dir out/
    tomobench run out/meta.json --out-dir rerun/
    tomobench selftest --seed 7

Configuration precedence, lowest to highest: built-in defaults for the
subcommand, the JSON config file (``run`` only), ``--set key=value``
overrides, then the dedicated flags (``--seed``, ``--trials``,
``--full-scale``).
"""
import argparse
import json
import os
import sys

from .errors import InvalidInputError, TomoError
from .experiments import FULL_SCALE_TRIALS, ExperimentConfig, execute, load_config, resolve_workers

OUT_DIR_ENV = "TOMOBENCH_OUT_DIR"
DEFAULT_OUT_DIR = "tomobench-out"


def _workers(text):
    if text == "auto":
        return text
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a positive integer or 'auto', got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("workers must be >= 1")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def _add_run_flags(p):
    p.add_argument("--seed", type=_seed, help="master seed (u64)")
    p.add_argument("--trials", type=_positive, help="Monte Carlo trials per sweep point")
    p.add_argument("--full-scale", action="store_true", help=f"use {FULL_SCALE_TRIALS} trials per point")
    p.add_argument("--out-dir", help=f"output directory (default ${OUT_DIR_ENV} or ./{DEFAULT_OUT_DIR})")
    p.add_argument("--workers", type=_workers, default="auto", help="worker processes, or 'auto'")
    p.add_argument("--plot", action=argparse.BooleanOptionalAction, default=True, help="write SVG figures")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override a config key (value parsed as JSON, else string); repeatable",
    )


def build_parser():
    parser = argparse.ArgumentParser(prog="tomobench", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for kind, text in (
        ("fig1", "MSE versus probe count for each event budget"),
        ("fig2", "bias of the DPT design estimate versus probe count"),
        ("fig3", "MSE versus inverse condition number"),
    ):
        _add_run_flags(sub.add_parser(kind, help=text))
    run = sub.add_parser("run", help="run an experiment from a JSON config (meta.json schema)")
    run.add_argument("config_path")
    _add_run_flags(run)
    st = sub.add_parser("selftest", help="run the fast invariant suites")
    st.add_argument("--seed", type=_seed, default=0)
    return parser


def parse_overrides(items):
    values = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise InvalidInputError(f"override {item!r} is not of the form key=value")
        try:
            values[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            values[key.strip()] = raw
    return values


def build_config(args, parser):
    """Apply defaults, config file, overrides and flags, in that order."""
    try:
        if args.command == "run":
            if not os.path.isfile(args.config_path):
                parser.error(f"config file not found: {args.config_path}")
            data = load_config(args.config_path)
            config = ExperimentConfig.from_dict(data)
        else:
            config = ExperimentConfig.defaults(args.command)
        overrides = parse_overrides(args.overrides)
        if "kind" in overrides and overrides["kind"] != config.kind:
            raise InvalidInputError("the experiment kind cannot be overridden")
        config = config.updated(overrides)
        flags = {}
        if args.full_scale:
            flags["trials"] = FULL_SCALE_TRIALS
        if args.trials is not None:
            flags["trials"] = args.trials
        if args.seed is not None:
            flags["master_seed"] = args.seed
        config = config.updated(flags)
        resolve_workers(args.workers)
    except (InvalidInputError, json.JSONDecodeError) as exc:
        parser.error(str(exc))
    return config


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "selftest":
        from .selftest import run_selftest

        return 0 if run_selftest(args.seed) else 1

    config = build_config(args, parser)
    out_dir = args.out_dir or os.environ.get(OUT_DIR_ENV) or DEFAULT_OUT_DIR
    try:
        table = execute(config, out_dir, workers=args.workers, plot=args.plot)
    except (TomoError, OSError) as exc:
        print(f"tomobench: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {len(table)} rows to {os.path.join(out_dir, 'results.csv')}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
