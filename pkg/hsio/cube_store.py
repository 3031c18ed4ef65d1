"""
Hypercube files in a minimal ENVI layout.

A cube lives in two files: the raw payload at ``path`` (little-endian
float32, band sequential) and a text header at ``path + ".hdr"``. Values are
normalised to [0, 1] on read; the original data range is kept on the
:class:`Cube` and written back as ``data min``/``data max``.
"""
import logging
import os
import tempfile
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from spectral.io import envi

from core.errors import ConfigError, CubeFormatError

logger = logging.getLogger(__name__)

HEADER_SUFFIX = ".hdr"
FLOAT32_TYPE = 4
PAYLOAD_DTYPE = np.dtype("<f4")


@dataclass
class Cube:
    """A normalised H x W x C cube and the data range it maps back to."""
    values: np.ndarray
    data_min: float = 0.0
    data_max: float = 1.0

    @property
    def shape(self):
        return self.values.shape

    def to_payload(self) -> np.ndarray:
        """Values mapped back to the data range, as float32."""
        span = self.data_max - self.data_min
        return (self.values * span + self.data_min).astype(PAYLOAD_DTYPE)

    def with_values(self, values: np.ndarray) -> "Cube":
        return Cube(values=values, data_min=self.data_min, data_max=self.data_max)


def header_path(path: str) -> str:
    return f"{path}{HEADER_SUFFIX}"


def _check_path(path: str) -> None:
    if not path or not str(path).strip():
        raise ConfigError("Cube path is empty", field="path")


def _int_key(header: Dict[str, str], key: str, default: Optional[int] = None) -> int:
    if key not in header:
        if default is None:
            raise CubeFormatError(f"Header is missing '{key}'", field=key)
        return default
    try:
        value = int(str(header[key]).strip())
    except ValueError:
        raise CubeFormatError(f"Header key '{key}' is not an integer: {header[key]!r}", field=key)
    if value < 0:
        raise CubeFormatError(f"Header key '{key}' is negative: {value}", field=key)
    return value


def _float_key(header: Dict[str, str], key: str) -> Optional[float]:
    if key not in header:
        return None
    try:
        value = float(str(header[key]).strip())
    except ValueError:
        raise CubeFormatError(f"Header key '{key}' is not a number: {header[key]!r}", field=key)
    if not np.isfinite(value):
        raise CubeFormatError(f"Header key '{key}' is not finite", field=key)
    return value


def read_header(path: str) -> Dict[str, str]:
    """Parse ``path + ".hdr"`` into a lowercase key/value dict."""
    hdr = header_path(path)
    if not os.path.exists(hdr):
        raise CubeFormatError(f"Header file not found: {hdr}", field="header")
    try:
        header = envi.read_envi_header(hdr)
    except (envi.FileNotAnEnviHeader, envi.EnviHeaderParsingError, UnicodeDecodeError) as e:
        raise CubeFormatError(f"Cannot parse header {hdr}: {e}", field="header")
    logger.debug(f"Header {hdr}: {header}")
    return header


def read_cube(path: str) -> Cube:
    """
    Read a cube and normalise it to [0, 1].

    The data range is taken from the header's ``data min``/``data max`` when
    present. Otherwise a payload already within [0, 1] is kept as is, and any
    other payload is stretched by its own min/max.

    Raises:
        CubeFormatError: malformed header or payload (``field`` names the key)
    """
    _check_path(path)
    header = read_header(path)
    samples = _int_key(header, "samples")
    lines = _int_key(header, "lines")
    bands = _int_key(header, "bands")
    offset = _int_key(header, "header offset", default=0)
    if min(samples, lines, bands) < 1:
        raise CubeFormatError(f"Cube extents must be positive: {lines}x{samples}x{bands}", field="samples")
    if _int_key(header, "data type") != FLOAT32_TYPE:
        raise CubeFormatError(f"Only 32-bit float payloads are supported (data type {FLOAT32_TYPE})", field="data type")
    if str(header.get("interleave", "bsq")).strip().lower() != "bsq":
        raise CubeFormatError(f"Only band-sequential interleave is supported, got {header['interleave']}", field="interleave")
    if _int_key(header, "byte order", default=0) != 0:
        raise CubeFormatError("Only little-endian payloads are supported", field="byte order")

    if not os.path.exists(path):
        raise CubeFormatError(f"Payload file not found: {path}", field="payload")
    with open(path, "rb") as f:
        raw = f.read()
    expected = samples * lines * bands * PAYLOAD_DTYPE.itemsize
    if len(raw) - offset != expected:
        raise CubeFormatError(
            f"payload length mismatch: header declares {expected} bytes, file has {len(raw) - offset}",
            field="payload",
        )
    payload = np.frombuffer(raw, dtype=PAYLOAD_DTYPE, offset=offset).reshape(bands, lines, samples)
    payload = payload.transpose(1, 2, 0).astype(np.float64)
    if not np.all(np.isfinite(payload)):
        raise CubeFormatError("Payload contains NaN or Inf", field="payload")

    data_min, data_max = _float_key(header, "data min"), _float_key(header, "data max")
    if data_min is None or data_max is None:
        low, high = float(payload.min()), float(payload.max())
        if low >= 0.0 and high <= 1.0:
            data_min, data_max = 0.0, 1.0
        else:
            data_min, data_max = low, high
    span = data_max - data_min
    if span < 0:
        raise CubeFormatError(f"data max {data_max} is below data min {data_min}", field="data max")
    if span == 0:
        values = np.zeros_like(payload)
    else:
        values = np.clip((payload - data_min) / span, 0.0, 1.0)

    logger.info(f"Read cube {path}: {lines}x{samples}x{bands}, data range [{data_min}, {data_max}]")
    return Cube(values=values, data_min=data_min, data_max=data_max)


def check_writable(path: str, overwrite: bool, field: str = "output") -> None:
    """Raise ConfigError when ``path`` exists and ``overwrite`` is off."""
    if not overwrite and os.path.exists(path):
        raise ConfigError(f"{path} exists; pass overwrite to replace it", field=field)


def atomic_write(target: str, write) -> None:
    directory = os.path.dirname(os.path.abspath(target))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(target))
    os.close(fd)
    try:
        write(tmp)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def write_cube(path: str, cube: Cube, overwrite: bool = False) -> None:
    """
    Write ``cube`` as payload + header, each via write-then-rename.

    Args:
        path: Payload path; the header goes to ``path + ".hdr"``
        cube: Normalised values plus their data range
        overwrite: Replace existing files

    Raises:
        ConfigError: empty path, or the target exists and overwrite is off
        CubeFormatError: values are not a finite H x W x C array
    """
    _check_path(path)
    values = np.asarray(cube.values, dtype=np.float64)
    if values.ndim != 3:
        raise CubeFormatError(f"Expected an H x W x C cube, got shape {values.shape}", field="rank")
    if not np.all(np.isfinite(values)):
        raise CubeFormatError("Cube contains NaN or Inf", field="values")
    for target in (path, header_path(path)):
        check_writable(target, overwrite)

    lines, samples, bands = values.shape
    payload = cube.with_values(values).to_payload().transpose(2, 0, 1)
    header = {
        "samples": str(samples),
        "lines": str(lines),
        "bands": str(bands),
        "header offset": "0",
        "file type": "ENVI Standard",
        "data type": str(FLOAT32_TYPE),
        "interleave": "bsq",
        "byte order": "0",
        "data min": repr(float(cube.data_min)),
        "data max": repr(float(cube.data_max)),
    }

    def write_payload(tmp: str) -> None:
        with open(tmp, "wb") as f:
            f.write(np.ascontiguousarray(payload).tobytes())

    atomic_write(path, write_payload)
    atomic_write(header_path(path), lambda tmp: envi.write_envi_header(tmp, header))
    logger.info(f"Wrote cube {path}: {lines}x{samples}x{bands}")


def read_mask(path: str, shape=None) -> np.ndarray:
    """
    Read a binary mask stored as a cube.

    Raises:
        CubeFormatError: values other than 0 and 1, or a shape other than ``shape``
    """
    mask = read_cube(path).values
    if not np.all((mask == 0) | (mask == 1)):
        raise CubeFormatError(f"Mask {path} is not binary", field="mask")
    if shape is not None and mask.shape != tuple(shape):
        raise CubeFormatError(f"Mask shape {mask.shape} differs from cube shape {tuple(shape)}", field="mask")
    return mask


def write_mask(path: str, mask: np.ndarray, overwrite: bool = False) -> None:
    write_cube(path, Cube(values=np.asarray(mask, dtype=np.float64)), overwrite=overwrite)
