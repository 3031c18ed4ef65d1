"""
CSV tables: run histories and metric reports.
"""
import logging

import pandas as pd

from hsio.cube_store import atomic_write, check_writable

logger = logging.getLogger(__name__)


def write_csv(frame: pd.DataFrame, path: str, overwrite: bool = False, field: str = "csv") -> None:
    """
    Write ``frame`` without its index, full float precision, LF line endings.

    The table goes to a temporary file next to ``path`` and is renamed into
    place, so a failed write never leaves a truncated file behind.

    Args:
        frame: Table to write
        path: Target CSV path
        overwrite: Replace an existing file
        field: Name reported in the ConfigError when the target exists

    Raises:
        ConfigError: the target exists and overwrite is off
    """
    check_writable(path, overwrite, field)
    atomic_write(path, lambda tmp: frame.to_csv(tmp, index=False, float_format="%.17g", lineterminator="\n"))
    logger.info(f"Wrote {len(frame)} rows to {path}")
