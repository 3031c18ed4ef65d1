"""
Task energies E(x, x0) and the super-resolution degradation d(x, alpha).

Each energy exists twice: as a plain numpy function for evaluation and
testing, and as a tape builder (``attach_*``) that appends the same
computation after the network output so it can be differentiated.
"""
import logging
from typing import Optional

import numpy as np

from autodiff import kernels
from autodiff.tape import Tape
from core.errors import IllPosedProblemError, ShapeMismatchError

logger = logging.getLogger(__name__)

TASKS = ("denoise", "inpaint", "superres")


def _check_same_shape(x: np.ndarray, x0: np.ndarray, label: str = "x0") -> None:
    if x.shape != x0.shape:
        axis = next((i for i, (a, b) in enumerate(zip(x.shape, x0.shape)) if a != b),
                    min(x.ndim, x0.ndim))
        raise ShapeMismatchError(
            f"Shapes differ: {x.shape} vs {x0.shape}", field=f"{label} axis {axis}",
            expected=x.shape, actual=x0.shape,
        )


def validate_mask(mask: np.ndarray, shape) -> np.ndarray:
    """
    Check a mask is binary, shaped like the cube and constrains something.

    Raises:
        ShapeMismatchError, ValueError, IllPosedProblemError
    """
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != tuple(shape):
        raise ShapeMismatchError(
            f"Mask shape {mask.shape} differs from cube shape {tuple(shape)}",
            field="mask", expected=tuple(shape), actual=mask.shape,
        )
    if not np.all((mask == 0) | (mask == 1)):
        raise ValueError("Mask must contain only 0 and 1")
    if not mask.any():
        raise IllPosedProblemError("Mask has no observed entries; nothing constrains the restoration", field="mask")
    return mask


# ---------------------------------------------------------------------------
# numpy energies
# ---------------------------------------------------------------------------

def energy_l2(x: np.ndarray, x0: np.ndarray) -> float:
    """Mean squared difference over all elements."""
    _check_same_shape(x, x0)
    diff = x - x0
    return float(np.mean(diff * diff))


def energy_masked(x: np.ndarray, x0: np.ndarray, mask: np.ndarray) -> float:
    """
    Mean squared difference over observed entries, ||(x - x0) o m||^2 / |m|.
    """
    _check_same_shape(x, x0)
    mask = validate_mask(mask, x.shape)
    diff = (x - x0) * mask
    return float(np.sum(diff * diff) / np.sum(mask))


def degrade_downsample(x: np.ndarray, alpha: int) -> np.ndarray:
    """Per-band alpha x alpha block averaging."""
    if alpha < 1:
        raise ValueError(f"alpha must be a positive integer, got {alpha}")
    return kernels.block_mean(np.asarray(x, dtype=np.float64), int(alpha))


def energy_sr(x: np.ndarray, x0_lowres: np.ndarray, alpha: int) -> float:
    """energy_l2(d(x, alpha), x0_lowres)."""
    low = degrade_downsample(x, alpha)
    _check_same_shape(low, x0_lowres, label="x0_lowres")
    return energy_l2(low, x0_lowres)


# ---------------------------------------------------------------------------
# Tape builders
# ---------------------------------------------------------------------------

def attach_l2(tape: Tape, x: int, target: int) -> int:
    diff = tape.apply("sub", x, target)
    return tape.apply("mean", tape.apply("square", diff), name="energy")


def attach_masked(tape: Tape, x: int, target: int, mask: int, observed: int) -> int:
    """``observed`` is count(m = 1), fixed at build time."""
    if observed < 1:
        raise IllPosedProblemError("Mask has no observed entries", field="mask")
    diff = tape.apply("mul", tape.apply("sub", x, target), mask)
    total = tape.apply("sum", tape.apply("square", diff))
    return tape.apply("scale", total, factor=1.0 / observed, name="energy")


def attach_sr(tape: Tape, x: int, target: int, alpha: int) -> int:
    low = tape.apply("block_mean", x, factor=int(alpha))
    return attach_l2(tape, low, target)


def attach_energy(tape: Tape, output: int, task: str, target_shape,
                  mask: Optional[np.ndarray] = None, sr_factor: Optional[int] = None) -> int:
    """
    Append the energy of ``task`` after ``output``.

    Registers inputs ``x0`` (and ``mask`` for inpainting) on the tape.

    Returns:
        int: id of the scalar energy node
    """
    if task not in TASKS:
        raise ValueError(f"Unknown task '{task}', expected one of {TASKS}")
    target = tape.input("x0", target_shape)
    if task == "denoise":
        return attach_l2(tape, output, target)
    if task == "inpaint":
        if mask is None:
            raise IllPosedProblemError("Inpainting requires a mask", field="mask")
        mask_id = tape.input("mask", target_shape)
        return attach_masked(tape, output, target, mask_id, int(np.sum(mask)))
    if sr_factor is None:
        raise ValueError("Super-resolution requires sr_factor")
    return attach_sr(tape, output, target, sr_factor)
