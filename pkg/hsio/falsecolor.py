"""
False-color previews of a cube as binary PPM pixmaps.
"""
import logging
from typing import Sequence, Tuple

import numpy as np
from PIL import Image

from core.errors import ShapeMismatchError
from hsio.cube_store import atomic_write, check_writable

logger = logging.getLogger(__name__)

# Conventional HYDICE/AVIRIS false-color triple.
DEFAULT_BANDS = (57, 27, 17)


def default_bands(bands: int) -> Tuple[int, int, int]:
    """DEFAULT_BANDS clamped to the cube's band count."""
    return tuple(min(b, bands - 1) for b in DEFAULT_BANDS)


def _stretch(band: np.ndarray) -> np.ndarray:
    low, high = float(band.min()), float(band.max())
    if high > low:
        scaled = (band - low) / (high - low)
    else:
        scaled = np.clip(band, 0.0, 1.0)
    return np.round(scaled * 255.0).astype(np.uint8)


def falsecolor_image(cube: np.ndarray, bands: Sequence[int]) -> np.ndarray:
    """
    H x W x 3 uint8 image from three bands, each min-max stretched.

    A constant band keeps its own value, so a constant cube gives a uniform gray.
    """
    cube = np.asarray(cube, dtype=np.float64)
    if cube.ndim != 3:
        raise ShapeMismatchError(f"Expected an H x W x C cube, got shape {cube.shape}", field="rank")
    if len(bands) != 3:
        raise ValueError(f"Exactly three bands are needed, got {len(bands)}")
    for b in bands:
        if not 0 <= b < cube.shape[2]:
            raise ShapeMismatchError(
                f"Band {b} is outside 0..{cube.shape[2] - 1}",
                field="bands", expected=f"< {cube.shape[2]}", actual=b,
            )
    return np.stack([_stretch(cube[:, :, b]) for b in bands], axis=-1)


def export_falsecolor(cube: np.ndarray, bands: Sequence[int], path: str, overwrite: bool = False) -> None:
    """
    Write a false-color preview of ``cube`` to ``path`` as binary PPM (P6).

    Args:
        cube: H x W x C values in [0, 1]
        bands: Indices for the red, green and blue channels
        path: Output pixmap path
        overwrite: Replace an existing file

    Raises:
        ConfigError: the target exists and overwrite is off
    """
    check_writable(path, overwrite, field="preview")
    rgb = falsecolor_image(cube, bands)
    image = Image.fromarray(rgb)
    atomic_write(path, lambda tmp: image.save(tmp, format="PPM"))
    logger.info(f"Wrote false-color preview {path} ({rgb.shape[0]}x{rgb.shape[1]}, bands {tuple(bands)})")
