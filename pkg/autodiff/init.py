"""
Seeded parameter initialisation.
"""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from core.seeding import make_rng

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParamSpec:
    """Name, shape, fan-in and bound gain of one parameter array."""
    name: str
    shape: Tuple[int, ...]
    fan_in: int
    gain: float = 1.0


def leaky_relu_gain(slope: float) -> float:
    """
    Uniform-bound gain that keeps the second moment of activations constant
    through a conv + LeakyReLU layer (He initialisation for a leaky slope).
    """
    return math.sqrt(6.0 / (1.0 + slope * slope))


# Unit-variance weights for a conv that feeds no rectifier.
LINEAR_GAIN = math.sqrt(3.0)


def init_params(seed: int, specs: Sequence[ParamSpec]) -> Dict[str, np.ndarray]:
    """
    Draw every parameter from U(-gain/sqrt(fan_in), gain/sqrt(fan_in)).

    Parameters are drawn in the order of ``specs`` from a single generator,
    so the same seed and spec list always produce the same arrays.

    Args:
        seed: Non-negative integer seed
        specs: Parameter descriptions in build order

    Returns:
        dict: parameter name -> float64 array
    """
    rng = make_rng(seed)
    params: Dict[str, np.ndarray] = {}
    for spec in specs:
        if spec.fan_in < 1:
            raise ValueError(f"fan_in must be positive for '{spec.name}', got {spec.fan_in}")
        if spec.gain <= 0:
            raise ValueError(f"gain must be positive for '{spec.name}', got {spec.gain}")
        bound = spec.gain / np.sqrt(spec.fan_in)
        params[spec.name] = rng.uniform(-bound, bound, size=spec.shape)
    logger.debug(f"Initialised {len(params)} parameter arrays from seed {seed}")
    return params
