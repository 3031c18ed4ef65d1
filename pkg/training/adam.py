"""
ADAM parameter updates.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Dict, Tuple

import numpy as np

from config.settings import ADAM_DEFAULTS
from core.errors import NonFiniteError, ShapeMismatchError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """Moment estimates and hyperparameters of one optimisation run."""
    lr: float = ADAM_DEFAULTS["lr"]
    beta1: float = ADAM_DEFAULTS["beta1"]
    beta2: float = ADAM_DEFAULTS["beta2"]
    eps: float = ADAM_DEFAULTS["eps"]
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        for name in ("beta1", "beta2"):
            beta = getattr(self, name)
            if not 0 < beta < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {beta}")
        if self.eps <= 0:
            raise ValueError(f"eps must be positive, got {self.eps}")


def adam_step(state: AdamState, params: Dict[str, np.ndarray],
              grads: Dict[str, np.ndarray]) -> Tuple[Dict[str, np.ndarray], AdamState]:
    """
    One bias-corrected ADAM update.

    Args:
        state: Current optimiser state (not modified)
        params: Parameter arrays by name
        grads: Gradient arrays by name

    Returns:
        tuple: (updated params, updated state)

    Raises:
        NonFiniteError: a gradient contains NaN/Inf (names the parameter)
        ShapeMismatchError: a gradient does not match its parameter
    """
    for name, param in params.items():
        grad = grads.get(name)
        if grad is None or grad.shape != param.shape:
            raise ShapeMismatchError(
                f"Gradient for '{name}' missing or mis-shaped",
                field=name, expected=param.shape, actual=None if grad is None else grad.shape,
            )
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError(f"Non-finite gradient for parameter '{name}'", field=name)

    step = state.step + 1
    correction1 = 1.0 - state.beta1 ** step
    correction2 = 1.0 - state.beta2 ** step

    new_params, new_m, new_v = {}, {}, {}
    for name, param in params.items():
        grad = grads[name]
        m = state.m.get(name, np.zeros_like(param))
        v = state.v.get(name, np.zeros_like(param))
        m = state.beta1 * m + (1.0 - state.beta1) * grad
        v = state.beta2 * v + (1.0 - state.beta2) * (grad * grad)
        m_hat = m / correction1
        v_hat = v / correction2
        new_params[name] = param - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_m[name] = m
        new_v[name] = v

    return new_params, replace(state, step=step, m=new_m, v=new_v)
