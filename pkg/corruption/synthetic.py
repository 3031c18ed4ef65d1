"""
Synthetic hyperspectral test cube: smooth spectral gradients plus a few
geometric shapes with their own spectra.
"""
import logging

import numpy as np

from core.seeding import make_rng

logger = logging.getLogger(__name__)

VALUE_LOW = 0.05
VALUE_HIGH = 0.95


def _spectrum(bands: int, rng: np.random.Generator) -> np.ndarray:
    """Smooth random spectrum: a sum of two low-frequency cosines."""
    t = np.linspace(0.0, 1.0, bands)
    freqs = rng.uniform(0.3, 1.5, size=2)
    phases = rng.uniform(0.0, 2 * np.pi, size=2)
    weights = rng.uniform(0.3, 1.0, size=2)
    curve = sum(w * np.cos(2 * np.pi * f * t + p) for w, f, p in zip(weights, freqs, phases))
    return curve / weights.sum()


def make_synthetic_cube(height: int, width: int, bands: int, seed: int = 0) -> np.ndarray:
    """
    Piecewise-smooth cube with values in [0.05, 0.95].

    The background mixes two spectra along a diagonal spatial gradient;
    rectangles and discs are painted on top, each with its own spectrum.

    Args:
        height: Rows
        width: Columns
        bands: Spectral bands
        seed: Layout and spectra seed

    Returns:
        np.ndarray: H x W x C cube
    """
    if min(height, width, bands) < 1:
        raise ValueError(f"Cube extents must be positive, got {(height, width, bands)}")
    rng = make_rng(seed)
    rows, cols = np.meshgrid(np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width), indexing="ij")
    blend = (0.6 * rows + 0.4 * cols)[..., None]
    first, second = _spectrum(bands, rng), _spectrum(bands, rng)
    cube = (1.0 - blend) * first + blend * second

    for _ in range(3):
        top, left = rng.integers(0, height // 2 + 1), rng.integers(0, width // 2 + 1)
        tall = rng.integers(max(height // 6, 1), max(height // 2, 2))
        wide = rng.integers(max(width // 6, 1), max(width // 2, 2))
        cube[top:top + tall, left:left + wide, :] = _spectrum(bands, rng)

    for _ in range(2):
        cy, cx = rng.uniform(0.2, 0.8) * height, rng.uniform(0.2, 0.8) * width
        radius = rng.uniform(0.1, 0.25) * min(height, width)
        yy, xx = np.ogrid[:height, :width]
        disc = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius ** 2
        cube[disc] = _spectrum(bands, rng)

    # Curves lie in [-1, 1]; map affinely into the value range.
    cube = VALUE_LOW + (VALUE_HIGH - VALUE_LOW) * (cube + 1.0) / 2.0
    logger.debug(f"Synthetic cube {cube.shape}, seed {seed}")
    return np.clip(cube, VALUE_LOW, VALUE_HIGH)
