"""
Command-line entry point.

    python -m cli.main denoise --input noisy.cube --output out.cube --seed 7
    python -m cli.main inpaint --input obs.cube --mask mask.cube --output out.cube
    python -m cli.main sr --input low.cube --sr-factor 2 --output out.cube
    python -m cli.main metrics --input out.cube --reference clean.cube
    python -m cli.main corrupt --input clean.cube --output noisy.cube --kind noise --sigma-8bit 25
    python -m cli.main synth --output clean.cube --height 64 --width 64 --cube-bands 16
"""
import argparse
import logging
import os
import sys
from typing import Any, Dict, List, Optional

# Add project root to sys.path
project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..'))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from config.settings import configure_logging
from core.errors import ConfigError, HSPriorError
from hsio.run_config import load_run_config
from cli import pipelines

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2

RESTORE_COMMANDS = tuple(pipelines.COMMAND_TASKS)

# argparse dests that are not run options
_NON_OPTIONS = {"patience", "log_level", "config", "command"}


def _int_list(text: str) -> List[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _band_triple(text: str) -> List[int]:
    bands = _int_list(text)
    if len(bands) != 3:
        raise argparse.ArgumentTypeError(f"expected three band indices R,G,B, got {text!r}")
    return bands


def _band_range(text: str) -> List[int]:
    start, sep, stop = text.partition(":")
    try:
        if not sep:
            raise ValueError
        return [int(start), int(stop)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected START:STOP, got {text!r}")


def _patience(text: str) -> List[float]:
    window, sep, min_delta = text.partition(",")
    try:
        return [int(window), float(min_delta)] if sep else [int(window)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected WINDOW[,MIN_DELTA], got {text!r}")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="key=value run-config file")
    parser.add_argument("--overwrite", action="store_true", default=None, help="replace existing output files")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--log-level", help="logging level (default from settings)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsprior",
        description="Restore hyperspectral cubes with an untrained convolutional network.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    for command, help_text in (
        ("denoise", "remove noise from --input"),
        ("inpaint", "fill the entries where --mask is 0"),
        ("sr", "super-resolve --input by --sr-factor"),
    ):
        sub = commands.add_parser(command, help=help_text)
        _add_common(sub)
        sub.add_argument("--input", help="observed cube")
        sub.add_argument("--output", help="restored cube")
        sub.add_argument("--mask", help="binary mask cube (inpaint)")
        sub.add_argument("--reference", help="clean cube; tracks MPSNR and prints metrics")
        sub.add_argument("--iters", type=int, help="iteration budget")
        sub.add_argument("--lr", type=float, help="ADAM learning rate")
        sub.add_argument("--arch", choices=["2d", "3d"], help="network variant")
        sub.add_argument("--levels", type=int, help="hourglass depth")
        sub.add_argument("--sr-factor", type=int, help="upscaling factor (sr)")
        sub.add_argument("--perturb-sigma", type=float, help="per-iteration input perturbation")
        sub.add_argument("--patience", type=_patience, help="early stopping WINDOW[,MIN_DELTA]")
        sub.add_argument("--history", help="CSV file for the per-iteration history")
        sub.add_argument("--preview", help="false-color PPM of the output")
        sub.add_argument("--bands", type=_band_triple, help="preview bands R,G,B")

    metrics = commands.add_parser("metrics", help="compare two cubes")
    _add_common(metrics)
    metrics.add_argument("--input", help="restored cube")
    metrics.add_argument("--reference", help="clean cube")
    metrics.add_argument("--csv", help="write the report as CSV")

    corrupt = commands.add_parser("corrupt", help="degrade a clean cube")
    _add_common(corrupt)
    corrupt.add_argument("--input", help="clean cube")
    corrupt.add_argument("--output", help="corrupted cube")
    corrupt.add_argument("--kind", choices=["noise", "stripes", "downsample"])
    corrupt.add_argument("--sigma", type=float, help="noise level on the [0, 1] scale")
    corrupt.add_argument("--sigma-8bit", type=float, help="noise level on the 0-255 scale")
    corrupt.add_argument("--stripe-count", type=int)
    corrupt.add_argument("--stripe-width", type=int)
    corrupt.add_argument("--band-range", type=_band_range, help="affected bands START:STOP")
    corrupt.add_argument("--columns", type=_int_list, help="fixed stripe start columns")
    corrupt.add_argument("--alpha", type=int, help="downsampling factor")
    corrupt.add_argument("--mask-output", help="stripe mask cube (default: OUTPUT.mask)")

    synth = commands.add_parser("synth", help="write a synthetic test cube")
    _add_common(synth)
    synth.add_argument("--output", help="cube path")
    synth.add_argument("--height", type=int, default=64)
    synth.add_argument("--width", type=int, default=64)
    synth.add_argument("--cube-bands", type=int, default=16)
    return parser


def merge_options(args: argparse.Namespace) -> Dict[str, Any]:
    """Run-config file values, overridden by every flag that was given."""
    options: Dict[str, Any] = {}
    if args.config:
        options.update(load_run_config(args.config).set_values())
    for key, value in vars(args).items():
        if key in _NON_OPTIONS or value is None:
            continue
        options[key] = value
    if args.command in RESTORE_COMMANDS and args.patience is not None:
        options["patience_window"] = args.patience[0]
        if len(args.patience) > 1:
            options["patience_min_delta"] = args.patience[1]
    return options


def run_cli(argv: Optional[List[str]] = None) -> int:
    """
    Parse ``argv``, run the subcommand and return the process exit code.

    0 on success, 1 on a runtime failure, 2 on a usage or configuration error.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE

    configure_logging(args.log_level)
    try:
        options = merge_options(args)
        if args.command in RESTORE_COMMANDS:
            report = pipelines.run_restoration(args.command, options)
            if report is not None:
                print(report.to_text())
        elif args.command == "metrics":
            print(pipelines.run_metrics(options).to_text())
        elif args.command == "corrupt":
            pipelines.run_corrupt(options)
        else:
            pipelines.run_synth(options)
    except ConfigError as e:
        print(f"hsprior {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (HSPriorError, ValueError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"hsprior {args.command}: error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    except Exception as e:
        logger.debug("Unexpected failure", exc_info=True)
        print(f"hsprior {args.command}: unexpected error: {e}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
