"""
File-to-file workflows behind the command-line subcommands.

Each pipeline takes a flat options dict (settings < config file < flags
already merged) and returns what the CLI should print.
"""
import logging
from typing import Any, Dict, Optional

from pydantic import ValidationError

from config.settings import settings
from core.errors import ConfigError
from core.seeding import derive_seeds
from corruption.degradations import CorruptionSpec, corrupt, sigma_from_8bit, upsample_bilinear, upsample_nearest
from corruption.synthetic import make_synthetic_cube
from evaluation.metrics import MetricReport, evaluate, mpsnr
from hsio.cube_store import Cube, check_writable, header_path, read_cube, read_mask, write_cube, write_mask
from hsio.falsecolor import default_bands, export_falsecolor
from hsio.run_config import config_error
from hsio.tables import write_csv
from network.hourglass import ArchSpec
from training.engine import FixedIters, Patience, TaskConfig, restore

logger = logging.getLogger(__name__)

COMMAND_TASKS = {"denoise": "denoise", "inpaint": "inpaint", "sr": "superres"}

# run-config / flag name -> ArchSpec field
_ARCH_KEYS = {
    "arch": "variant",
    "levels": "levels",
    "channels": "channels_per_level",
    "kernel_size": "kernel_size",
    "skip": "skip",
    "skip_channels": "skip_channels",
    "upsample_mode": "upsample_mode",
    "leaky_slope": "leaky_slope",
    "spectral_downsampling": "spectral_downsampling",
}
_TASK_KEYS = ("iters", "lr", "beta1", "beta2", "eps", "seed", "input_noise_range", "perturb_sigma", "sr_factor")


def require(options: Dict[str, Any], *keys: str) -> None:
    """Raise ConfigError naming the first missing required option."""
    for key in keys:
        if options.get(key) in (None, ""):
            raise ConfigError(f"--{key.replace('_', '-')} is required", field=key)


def check_outputs(options: Dict[str, Any], cube_keys=("output",), file_keys=()) -> None:
    """
    Fail before any work when a target file exists and --overwrite is off.

    Raises:
        ConfigError: naming the option whose target exists
    """
    overwrite = bool(options.get("overwrite"))
    for key in cube_keys:
        if options.get(key):
            for target in (options[key], header_path(options[key])):
                check_writable(target, overwrite, field=key)
    for key in file_keys:
        if options.get(key):
            check_writable(options[key], overwrite, field=key)


def build_task_config(task: str, options: Dict[str, Any], output_shape) -> TaskConfig:
    """
    TaskConfig for ``task`` from merged options; unset keys fall back to settings.

    Raises:
        ConfigError: an option has an invalid value
    """
    arch_values = {_ARCH_KEYS[k]: v for k, v in options.items() if k in _ARCH_KEYS and v is not None}
    arch_values.setdefault("leaky_slope", settings.leaky_slope)
    task_values = {k: options[k] for k in _TASK_KEYS if options.get(k) is not None}
    if options.get("patience_window") is not None:
        stop_policy = Patience(
            window=options["patience_window"],
            **({"min_delta": options["patience_min_delta"]} if options.get("patience_min_delta") else {}),
        )
    else:
        stop_policy = FixedIters()
    try:
        arch = ArchSpec(input_shape=tuple(output_shape), **arch_values)
        return TaskConfig.for_task(task, output_shape, arch=arch, stop_policy=stop_policy,
                                   log_every=settings.log_every, **task_values)
    except ValidationError as e:
        raise config_error(e) from e


def run_restoration(command: str, options: Dict[str, Any]) -> Optional[MetricReport]:
    """
    Read the observation, restore it and write the result (plus history and preview).

    Returns:
        MetricReport against --reference, or None without one
    """
    task = COMMAND_TASKS[command]
    require(options, "input", "output")
    if task == "inpaint":
        require(options, "mask")
    if task == "superres":
        require(options, "sr_factor")
    check_outputs(options, file_keys=("history", "preview"))

    observed = read_cube(options["input"])
    height, width, bands = observed.shape
    factor = options["sr_factor"] if task == "superres" else 1
    output_shape = (height * factor, width * factor, bands)
    config = build_task_config(task, options, output_shape)

    mask = read_mask(options["mask"], observed.shape) if task == "inpaint" else None
    reference = read_cube(options["reference"]).values if options.get("reference") else None

    if task == "superres" and reference is not None:
        for name, baseline in (("nearest", upsample_nearest), ("bilinear", upsample_bilinear)):
            logger.info(f"{name.capitalize()} baseline MPSNR {mpsnr(baseline(observed.values, factor), reference):.3f} dB")

    restored, history = restore(config, observed.values, mask=mask, reference=reference)

    overwrite = bool(options.get("overwrite"))
    write_cube(options["output"], observed.with_values(restored), overwrite=overwrite)
    if options.get("history"):
        history.to_csv(options["history"], timing=settings.history_timing, overwrite=overwrite)
    if options.get("preview"):
        export_falsecolor(restored, options.get("bands") or default_bands(bands), options["preview"],
                          overwrite=overwrite)

    if reference is None:
        return None
    return evaluate(restored, reference)


def run_metrics(options: Dict[str, Any]) -> MetricReport:
    """Compare --input against --reference, optionally writing a one-row CSV."""
    require(options, "input", "reference")
    check_outputs(options, cube_keys=(), file_keys=("csv",))
    report = evaluate(read_cube(options["input"]).values, read_cube(options["reference"]).values)
    if options.get("csv"):
        write_csv(report.to_frame(), options["csv"], overwrite=bool(options.get("overwrite")))
    return report


def corruption_spec(options: Dict[str, Any]) -> CorruptionSpec:
    """CorruptionSpec from corrupt-subcommand options; the seed is the corruption stream of --seed."""
    kind = options.get("kind")
    seed = derive_seeds(options.get("seed") if options.get("seed") is not None else settings.seed).corruption
    values: Dict[str, Any] = {"kind": kind, "seed": seed}
    if kind == "noise":
        if options.get("sigma_8bit") is not None:
            values["sigma"] = sigma_from_8bit(options["sigma_8bit"])
        else:
            require(options, "sigma")
            values["sigma"] = options["sigma"]
    elif kind == "stripes":
        for key in ("stripe_count", "stripe_width", "band_range", "columns"):
            if options.get(key) is not None:
                values[key] = options[key]
        values.setdefault("stripe_width", 1)
    elif kind == "downsample":
        require(options, "alpha")
        values["alpha"] = options["alpha"]
    try:
        return CorruptionSpec(**values)
    except ValidationError as e:
        raise config_error(e) from e


def run_corrupt(options: Dict[str, Any]) -> None:
    """Degrade --input into --output; stripes also write a mask cube."""
    require(options, "input", "output", "kind")
    spec = corruption_spec(options)
    mask_path = options.get("mask_output") or f"{options['output']}.mask"
    check_outputs(options)
    if spec.kind == "stripes":
        check_outputs({**options, "mask_output": mask_path}, cube_keys=("mask_output",))
    clean = read_cube(options["input"])
    observed, mask = corrupt(clean.values, spec)
    overwrite = bool(options.get("overwrite"))
    write_cube(options["output"], clean.with_values(observed), overwrite=overwrite)
    if mask is not None:
        write_mask(mask_path, mask, overwrite=overwrite)
        logger.info(f"Wrote stripe mask {mask_path}")


def run_synth(options: Dict[str, Any]) -> None:
    """Write a synthetic test cube to --output."""
    require(options, "output")
    seed = options.get("seed") if options.get("seed") is not None else settings.seed
    cube = make_synthetic_cube(options["height"], options["width"], options["cube_bands"], seed=seed)
    write_cube(options["output"], Cube(values=cube), overwrite=bool(options.get("overwrite")))
