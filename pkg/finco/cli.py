"""
Command-line driver.

    finco run <config.toml> --mode finco [--override key.path=value ...]
    finco run --preset morse-short --mode compare
    finco presets list
    finco presets show morse-revival
    finco version

Exit codes: 0 success, 2 configuration error, 3 empty reconstruction,
1 any other package error.
"""

import argparse
import logging
import sys
from dataclasses import replace

from finco import __version__
from finco.config import PRESETS, apply_overrides, dumps_config, load_config, preset
from finco.errors import ConfigError, EmptyReconstruction, FincoError
from finco.logs import configure_logging
from finco.pipeline import Mode, run

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def build_parser():
    parser = argparse.ArgumentParser(prog="finco", description="Complex-trajectory semiclassical wavepacket propagation.")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug-level logging")
    commands = parser.add_subparsers(dest="command", required=True)

    run_cmd = commands.add_parser("run", help="Run one mode on a configuration")
    run_cmd.add_argument("config", nargs="?", help="TOML run configuration")
    run_cmd.add_argument("--preset", choices=sorted(PRESETS), help="Start from a named preset instead of a file")
    run_cmd.add_argument("--mode", choices=[m.value for m in Mode], default=Mode.FINCO.value)
    run_cmd.add_argument(
        "--override", action="append", default=[], metavar="KEY=VALUE",
        help="Override a config entry, e.g. filters.sigma=-3 (repeatable)",
    )
    run_cmd.add_argument("--output", help="Output directory (default: output.directory)")
    run_cmd.add_argument("--workers", type=int, help="Worker processes (0 = all cores)")

    presets_cmd = commands.add_parser("presets", help="List or show experiment presets")
    preset_actions = presets_cmd.add_subparsers(dest="action", required=True)
    preset_actions.add_parser("list", help="List preset names")
    show = preset_actions.add_parser("show", help="Print a preset as TOML")
    show.add_argument("name")

    commands.add_parser("version", help="Print the package version")
    return parser


def resolve_config(args):
    if args.preset and args.config:
        raise ConfigError("", "give either a config file or --preset, not both")
    if args.preset:
        config = preset(args.preset)
    elif args.config:
        config = load_config(args.config)
    else:
        raise ConfigError("", "a config file or --preset is required")
    overrides = list(args.override)
    if args.workers is not None:
        overrides.append(f"workers={args.workers}")
    config = apply_overrides(config, overrides)
    if args.output:
        config = replace(config, output=replace(config.output, directory=str(args.output)))
    return config


def main(argv=None):
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        if args.command == "version":
            print(__version__)
        elif args.command == "presets":
            if args.action == "list":
                for name in sorted(PRESETS):
                    print(name)
            else:
                print(dumps_config(preset(args.name)), end="")
        else:
            run(resolve_config(args), args.mode)
    except ConfigError as e:
        logger.error(f"[ERROR] Configuration: {e}")
        return EXIT_CONFIG
    except EmptyReconstruction as e:
        logger.error(f"[ERROR] Reconstruction failed: {e}")
        return EXIT_NUMERICAL
    except FincoError as e:
        logger.error(f"[ERROR] {e}")
        return EXIT_FAILURE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
