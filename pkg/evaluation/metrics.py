"""
Quality measures between a restored cube and a reference cube.

- MPSNR: mean over bands of 10 log10(1 / MSE_band), peak 1.0
- MSSIM: mean over bands of SSIM (11x11 Gaussian window, sigma 1.5,
  K1 = 0.01, K2 = 0.03, data range 1.0)
- SAM: mean spectral angle in degrees over pixels with nonzero spectra
"""
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np
import pandas as pd
from skimage.metrics import structural_similarity

from core.errors import IllPosedProblemError, ShapeMismatchError

logger = logging.getLogger(__name__)

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
PEAK = 1.0


@dataclass(frozen=True)
class MetricReport:
    """MPSNR (dB), MSSIM and SAM (degrees) of one comparison."""
    mpsnr: float
    mssim: float
    sam: float

    def to_text(self) -> str:
        return "\n".join([
            f"MPSNR = {_fmt(self.mpsnr)}",
            f"MSSIM = {_fmt(self.mssim)}",
            f"SAM   = {_fmt(self.sam)}",
        ])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(self)], columns=["mpsnr", "mssim", "sam"])


def _fmt(value: float) -> str:
    if math.isinf(value):
        return "inf"
    text = f"{value:.4f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def _check_pair(x: np.ndarray, ref: np.ndarray) -> None:
    if x.shape != ref.shape:
        axis = next((i for i, (a, b) in enumerate(zip(x.shape, ref.shape)) if a != b),
                    min(x.ndim, ref.ndim))
        raise ShapeMismatchError(
            f"Cube shapes differ: {x.shape} vs {ref.shape}", field=f"axis {axis}",
            expected=ref.shape, actual=x.shape,
        )
    if x.ndim != 3:
        raise ShapeMismatchError(f"Expected an H x W x C cube, got rank {x.ndim}", field="rank")


def mpsnr(x: np.ndarray, ref: np.ndarray) -> float:
    """
    Mean PSNR over bands.

    Bands reproduced exactly (zero MSE) are left out of the mean; only
    identical cubes give ``inf``.
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    _check_pair(x, ref)
    diff = x - ref
    mse = np.mean(diff * diff, axis=(0, 1))
    differing = mse[mse > 0]
    if differing.size == 0:
        return float("inf")
    return float(np.mean(10.0 * np.log10(PEAK * PEAK / differing)))


def mssim(x: np.ndarray, ref: np.ndarray) -> float:
    """
    Mean SSIM over bands.

    Raises:
        ShapeMismatchError: spatial extents smaller than the 11x11 window
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    _check_pair(x, ref)
    height, width = x.shape[:2]
    if min(height, width) < SSIM_WINDOW:
        raise ShapeMismatchError(
            f"Image {height}x{width} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window",
            field="height" if height < SSIM_WINDOW else "width",
            expected=f">= {SSIM_WINDOW}", actual=(height, width),
        )
    scores = [
        structural_similarity(
            x[:, :, band], ref[:, :, band],
            data_range=PEAK, gaussian_weights=True, sigma=SSIM_SIGMA,
            use_sample_covariance=False, K1=SSIM_K1, K2=SSIM_K2,
        )
        for band in range(x.shape[2])
    ]
    return float(np.mean(scores))


def sam(x: np.ndarray, ref: np.ndarray) -> float:
    """
    Mean spectral angle in degrees. Pixels where either spectrum has zero
    norm are left out.

    Raises:
        IllPosedProblemError: every pixel has a zero-norm spectrum
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    _check_pair(x, ref)
    dot = np.sum(x * ref, axis=2)
    norms = np.sqrt(np.sum(x * x, axis=2) * np.sum(ref * ref, axis=2))
    valid = norms > 0
    if not valid.any():
        raise IllPosedProblemError("All spectra have zero norm; spectral angle undefined", field="spectra")
    cosine = np.clip(dot[valid] / norms[valid], -1.0, 1.0)
    return float(np.degrees(np.mean(np.arccos(cosine))))


def evaluate(x: np.ndarray, ref: np.ndarray) -> MetricReport:
    """All three measures of ``x`` against ``ref``."""
    report = MetricReport(mpsnr=mpsnr(x, ref), mssim=mssim(x, ref), sam=sam(x, ref))
    logger.info(f"MPSNR {report.mpsnr:.3f} dB, MSSIM {report.mssim:.4f}, SAM {report.sam:.3f} deg")
    return report
