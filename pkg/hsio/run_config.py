"""
Flat ``key = value`` run-configuration files.

Lines are ``key = value``; blank lines and lines starting with ``#`` are
ignored. Unknown keys are rejected.
"""
import logging
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from core.errors import ConfigError

logger = logging.getLogger(__name__)


def _split_ints(value):
    if isinstance(value, str):
        return [int(part) for part in value.replace(" ", "").split(",") if part]
    return value


class RunConfig(BaseModel):
    """
    Every setting a run-config file may hold. Unset keys stay None so the
    caller can layer CLI flags and settings defaults around them.
    """
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Paths
    input: Optional[str] = None
    output: Optional[str] = None
    mask: Optional[str] = None
    reference: Optional[str] = None
    history: Optional[str] = None
    preview: Optional[str] = None
    bands: Optional[Tuple[int, int, int]] = None

    # Task / optimiser
    iters: Optional[int] = Field(None, gt=0)
    lr: Optional[float] = Field(None, gt=0)
    beta1: Optional[float] = Field(None, gt=0, lt=1)
    beta2: Optional[float] = Field(None, gt=0, lt=1)
    eps: Optional[float] = Field(None, gt=0)
    seed: Optional[int] = Field(None, ge=0)
    input_noise_range: Optional[float] = Field(None, gt=0)
    perturb_sigma: Optional[float] = Field(None, ge=0)
    sr_factor: Optional[int] = Field(None, ge=1)
    patience_window: Optional[int] = Field(None, ge=1)
    patience_min_delta: Optional[float] = Field(None, gt=0)

    # Architecture
    arch: Optional[Literal["2d", "3d"]] = None
    levels: Optional[int] = Field(None, ge=1)
    channels: Optional[List[int]] = None
    kernel_size: Optional[int] = Field(None, ge=1)
    skip: Optional[bool] = None
    skip_channels: Optional[int] = Field(None, ge=1)
    upsample_mode: Optional[Literal["nearest", "linear"]] = None
    leaky_slope: Optional[float] = Field(None, gt=0, lt=1)
    spectral_downsampling: Optional[Literal["auto", "strict", "off"]] = None

    @field_validator("channels", "bands", mode="before")
    @classmethod
    def _comma_list(cls, value):
        return _split_ints(value)

    @field_validator("arch", mode="before")
    @classmethod
    def _lower(cls, value):
        return value.lower() if isinstance(value, str) else value

    def set_values(self) -> Dict[str, object]:
        """Only the keys that were given a value."""
        return self.model_dump(exclude_none=True)


def config_error(e: ValidationError) -> ConfigError:
    """ConfigError naming the first key a pydantic model rejected."""
    error = e.errors()[0]
    key = str(error["loc"][0]) if error["loc"] else "config"
    if error["type"] == "extra_forbidden":
        return ConfigError(f"Unknown config key '{key}'", field=key)
    return ConfigError(f"Invalid value for '{key}': {error['msg']}", field=key)


def build_run_config(values: Dict[str, object]) -> RunConfig:
    """
    Validate raw values into a RunConfig.

    Raises:
        ConfigError: naming the first offending key
    """
    try:
        return RunConfig(**values)
    except ValidationError as e:
        raise config_error(e) from e


def parse_run_config(text: str, source: str = "<config>") -> RunConfig:
    """
    Parse key=value text.

    Raises:
        ConfigError: malformed line, duplicate key, unknown key or bad value
    """
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower().replace("-", "_")
        if not sep or not key:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {raw!r}", field=key or "line")
        if key in values:
            raise ConfigError(f"{source}:{number}: duplicate key '{key}'", field=key)
        values[key] = value.strip()
    config = build_run_config(values)
    logger.debug(f"Run config from {source}: {config.set_values()}")
    return config


def load_run_config(path: str) -> RunConfig:
    """Read and parse a run-config file."""
    try:
        with open(path, "r", encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"Cannot read config file {path}: {e}", field="config")
    logger.info(f"Loaded run config {path}")
    return parse_run_config(text, source=path)
