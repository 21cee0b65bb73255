"""Command-line interface for wedge-kit."""

import argparse
import logging
import sys
from dataclasses import replace

from .bench import cmd_bench
from .config import ExperimentConfig, format_config, load_config
from .errors import ConfigError, ManifestError, WedgeError
from .pipeline import cmd_eval, cmd_gen_data, cmd_run_pipeline, cmd_sweep

# Module logger
logger = logging.getLogger(__name__)

# Exit codes
EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_CONFIG_ERROR = 2

SWEEPS = {
    "sweep-tau": "tau",
    "sweep-method": "method",
    "sweep-points": "points",
    "sweep-corpus": "corpus",
    "sweep-reference": "reference",
}


def _setup_runtime(verbose: bool = False) -> None:
    """Set up logging once for the process."""
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
    )


def _config(args: argparse.Namespace) -> ExperimentConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(seed=args.seed, out_dir=args.out, jobs=args.jobs)


def gen_data(args: argparse.Namespace) -> int:
    """Generate the synthetic splits; ``--out`` names the data directory."""
    cfg = load_config(args.config)
    if args.out is not None:
        cfg = replace(cfg, paths=replace(cfg.paths, data_dir=str(args.out)))
    cmd_gen_data(cfg, seed=args.seed)
    return EXIT_OK


def run(args: argparse.Namespace) -> int:
    cmd_run_pipeline(_config(args))
    return EXIT_OK


def sweep(args: argparse.Namespace) -> int:
    cmd_sweep(_config(args), SWEEPS[args.command])
    return EXIT_OK


def bench(args: argparse.Namespace) -> int:
    cmd_bench(_config(args), seed=args.seed or 0)
    return EXIT_OK


def print_config(args: argparse.Namespace) -> int:
    sys.stdout.write(format_config(_config(args)))
    return EXIT_OK


def evaluate(args: argparse.Namespace) -> int:
    cmd_eval(_config(args), args.checkpoint)
    return EXIT_OK


def _common_options() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=None, help="INI configuration file")
    common.add_argument("--seed", type=int, default=None, help="run a single seed")
    common.add_argument("--out", default=None, help="output directory")
    common.add_argument("--jobs", type=int, default=None, help="parallel processes")
    common.add_argument("--verbose", action="store_true", help="debug logging")
    return common


def _build_parser() -> argparse.ArgumentParser:
    """Build the argument parser for the CLI."""
    parser = argparse.ArgumentParser(
        prog="wedge-kit",
        description="Style injection and pseudo labeling with web images on synthetic domains",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    common = _common_options()

    p = subparsers.add_parser("gen-data", parents=[common], help="Generate the synthetic splits")
    p.set_defaults(func=gen_data)

    p = subparsers.add_parser("run", parents=[common], help="Run the three-step pipeline")
    p.set_defaults(func=run)

    for name, kind in SWEEPS.items():
        p = subparsers.add_parser(name, parents=[common], help=f"Sweep over {kind}")
        p.set_defaults(func=sweep)

    p = subparsers.add_parser("bench", parents=[common], help="Time the injection methods")
    p.set_defaults(func=bench)

    p = subparsers.add_parser(
        "print-config", parents=[common], help="Print the resolved configuration"
    )
    p.set_defaults(func=print_config)

    p = subparsers.add_parser("eval", parents=[common], help="Evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True, help="checkpoint written by run")
    p.set_defaults(func=evaluate)

    return parser


def app(argv=None) -> int:
    """Main application entry point; returns the process exit code."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    _setup_runtime(getattr(args, "verbose", False))
    func = getattr(args, "func", None)
    if func is None:
        parser.print_help()
        return EXIT_CONFIG_ERROR
    try:
        return int(func(args) or EXIT_OK)
    except (ConfigError, ManifestError) as e:
        logger.error("Configuration error: %s", e)
        return EXIT_CONFIG_ERROR
    except (WedgeError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return EXIT_RUNTIME_ERROR


def main() -> None:
    sys.exit(app())
