"""
Synthetic degradations: additive Gaussian noise, vertical stripe masks and
spatial downsampling.

Every generator is a pure function of its arguments and seed.
"""
import logging
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from autodiff.kernels import upsample
from core.errors import ShapeMismatchError
from core.seeding import make_rng
from training.objectives import degrade_downsample

logger = logging.getLogger(__name__)

EIGHT_BIT_PEAK = 255.0

_KIND_FIELDS = {
    "noise": {"sigma"},
    "stripes": {"stripe_count", "stripe_width", "band_range", "columns"},
    "downsample": {"alpha"},
}


class CorruptionSpec(BaseModel):
    """
    One degradation to apply to a clean cube.

    Only the fields belonging to ``kind`` may be set; ``band_range`` is a
    half-open [start, stop) band interval (all bands when omitted) and
    ``columns`` fixes stripe start columns instead of drawing them.
    """
    model_config = ConfigDict(frozen=True)

    kind: Literal["noise", "stripes", "downsample"]
    sigma: Optional[float] = Field(None, ge=0)
    stripe_count: Optional[int] = Field(None, ge=0)
    stripe_width: Optional[int] = Field(None, ge=1)
    band_range: Optional[Tuple[int, int]] = None
    columns: Optional[List[int]] = None
    alpha: Optional[int] = Field(None, ge=1)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _fields_of_kind(self):
        allowed = _KIND_FIELDS[self.kind]
        for name in set().union(*_KIND_FIELDS.values()) - allowed:
            if getattr(self, name) is not None:
                raise ValueError(f"'{name}' is not used by {self.kind} corruption")
        if self.kind == "noise" and self.sigma is None:
            raise ValueError("noise corruption needs sigma")
        if self.kind == "downsample" and self.alpha is None:
            raise ValueError("downsample corruption needs alpha")
        if self.kind == "stripes" and self.columns is None and self.stripe_count is None:
            raise ValueError("stripes corruption needs stripe_count or columns")
        return self


def sigma_from_8bit(sigma: float) -> float:
    """Convert a noise level given on the 0-255 scale to the [0, 1] scale."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    return sigma / EIGHT_BIT_PEAK


def gaussian_noise_field(shape, sigma: float, seed: int) -> np.ndarray:
    """The N(0, sigma^2) field that :func:`add_gaussian_noise` adds."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    return make_rng(seed).normal(0.0, sigma, size=tuple(shape))


def add_gaussian_noise(x: np.ndarray, sigma: float, seed: int) -> np.ndarray:
    """
    x + N(0, sigma^2), clipped to [0, 1].

    Args:
        x: Clean cube in [0, 1]
        sigma: Standard deviation on the [0, 1] scale
        seed: Noise seed

    Returns:
        np.ndarray: noisy cube
    """
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    noisy = np.clip(x + gaussian_noise_field(x.shape, sigma, seed), 0.0, 1.0)
    logger.debug(f"Added Gaussian noise sigma={sigma:.4f} to cube {x.shape}")
    return noisy


def _band_slice(band_range: Optional[Sequence[int]], bands: int) -> slice:
    if band_range is None:
        return slice(0, bands)
    start, stop = (int(b) for b in band_range)
    if not 0 <= start < stop <= bands:
        raise ShapeMismatchError(
            f"Band range [{start}, {stop}) is outside 0..{bands}",
            field="band_range", expected=f"within [0, {bands}]", actual=(start, stop),
        )
    return slice(start, stop)


def _stripe_columns(width: int, count: int, stripe_width: int, rng: np.random.Generator) -> List[int]:
    # Choosing sorted offsets among the free columns keeps every stripe disjoint.
    free = width - count * stripe_width
    offsets = np.sort(rng.choice(free + count, size=count, replace=False))
    return [int(offset) + i * (stripe_width - 1) for i, offset in enumerate(offsets)]


def make_stripe_mask(shape, stripe_count: int, stripe_width: int,
                     band_range: Optional[Sequence[int]] = None, seed: int = 0,
                     columns: Optional[Sequence[int]] = None) -> np.ndarray:
    """
    Binary mask of vertical stripes of zeros.

    Args:
        shape: Cube shape (H, W, C)
        stripe_count: Number of stripes (ignored when ``columns`` is given)
        stripe_width: Width of each stripe in pixels
        band_range: Affected bands as [start, stop); all bands when None
        seed: Placement seed
        columns: Fixed start column per stripe

    Returns:
        np.ndarray: float mask, 0 on stripes within the band range, 1 elsewhere

    Raises:
        ShapeMismatchError: stripes do not fit or band range is out of bounds
    """
    height, width, bands = (int(n) for n in shape)
    if stripe_width < 1:
        raise ValueError(f"stripe_width must be positive, got {stripe_width}")
    bands_hit = _band_slice(band_range, bands)
    mask = np.ones((height, width, bands), dtype=np.float64)

    if columns is None:
        if stripe_count < 0:
            raise ValueError(f"stripe_count must be non-negative, got {stripe_count}")
        if stripe_count * stripe_width > width:
            raise ShapeMismatchError(
                f"{stripe_count} stripes of width {stripe_width} do not fit in {width} columns",
                field="width", expected=f">= {stripe_count * stripe_width}", actual=width,
            )
        starts = _stripe_columns(width, stripe_count, stripe_width, make_rng(seed)) if stripe_count else []
    else:
        starts = [int(c) for c in columns]
        for start in starts:
            if not 0 <= start <= width - stripe_width:
                raise ShapeMismatchError(
                    f"Stripe at column {start} of width {stripe_width} leaves the image",
                    field="columns", expected=f"within [0, {width - stripe_width}]", actual=start,
                )

    for start in starts:
        mask[:, start:start + stripe_width, bands_hit] = 0.0
    logger.debug(f"Stripe mask {mask.shape}: columns {starts}, bands {bands_hit.start}:{bands_hit.stop}")
    return mask


def downsample_observation(x: np.ndarray, alpha: int) -> np.ndarray:
    """Low-resolution observation, identical to the super-resolution forward model."""
    return degrade_downsample(x, alpha)


def upsample_nearest(x: np.ndarray, alpha: int) -> np.ndarray:
    """Pixel replication by ``alpha``; the naive super-resolution baseline."""
    if alpha < 1:
        raise ValueError(f"alpha must be a positive integer, got {alpha}")
    x = np.asarray(x, dtype=np.float64)
    return np.repeat(np.repeat(x, alpha, axis=0), alpha, axis=1)


def upsample_bilinear(x: np.ndarray, alpha: int) -> np.ndarray:
    """
    Bilinear interpolation by ``alpha`` (half-pixel centres, clamped edges);
    the interpolation baseline a learned super-resolution has to beat.
    """
    if alpha < 1:
        raise ValueError(f"alpha must be a positive integer, got {alpha}")
    return upsample(np.asarray(x, dtype=np.float64), (alpha, alpha), "linear")


def corrupt(x: np.ndarray, spec: CorruptionSpec) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """
    Apply ``spec`` to a clean cube.

    Returns:
        tuple: (observation, mask). The mask is only produced for stripes, and
        the observation is zero on its unobserved entries.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise ShapeMismatchError(f"Expected an H x W x C cube, got shape {x.shape}", field="rank")
    if spec.kind == "noise":
        return add_gaussian_noise(x, spec.sigma, spec.seed), None
    if spec.kind == "downsample":
        return downsample_observation(x, spec.alpha), None
    mask = make_stripe_mask(
        x.shape, spec.stripe_count or 0, spec.stripe_width or 1,
        band_range=spec.band_range, seed=spec.seed, columns=spec.columns,
    )
    return x * mask, mask
