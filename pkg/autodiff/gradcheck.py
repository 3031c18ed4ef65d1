"""
Central finite-difference gradient checking for tapes.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from autodiff.tape import Tape

logger = logging.getLogger(__name__)


@dataclass
class GradCheckReport:
    """Outcome of :func:`check_gradients`."""
    max_relative_error: float = 0.0
    checked: int = 0
    worst_param: Optional[str] = None
    worst_index: Optional[tuple] = None
    errors: Dict[str, np.ndarray] = field(default_factory=dict)

    def passed(self, tolerance: float = 1e-4) -> bool:
        return self.max_relative_error < tolerance


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise."""
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / scale


def _loss_at(tape: Tape, loss: int, feeds: Dict[str, np.ndarray]):
    tape.run(feeds)
    return float(tape.value(loss)), tape.activation_pattern()


def check_gradients(tape: Tape, loss: int, feeds: Dict[str, np.ndarray],
                    h: float = 1e-5, floor: float = 1e-6,
                    params: Optional[List[str]] = None) -> GradCheckReport:
    """
    Compare analytic gradients against central differences on every element.

    When a LeakyReLU input changes sign between the two evaluations the
    difference straddles a kink; the step is then shrunk 100x (twice at most).

    Args:
        tape: Built tape
        loss: Scalar node id
        feeds: Input values
        h: Finite-difference step
        floor: Denominator floor of the relative error
        params: Restrict the check to these parameter names

    Returns:
        GradCheckReport
    """
    tape.run(feeds)
    base_pattern = tape.activation_pattern()
    analytic = tape.backward(loss)
    names = params or list(analytic)
    report = GradCheckReport()

    for name in names:
        original = tape.get_param(name).copy()
        numeric = np.zeros_like(original)
        for index in np.ndindex(*original.shape):
            step = h
            for _ in range(3):
                shifted = original.copy()
                shifted[index] += step
                tape.set_param(name, shifted)
                plus, plus_pattern = _loss_at(tape, loss, feeds)
                shifted[index] = original[index] - step
                tape.set_param(name, shifted)
                minus, minus_pattern = _loss_at(tape, loss, feeds)
                if plus_pattern == base_pattern and minus_pattern == base_pattern:
                    break
                step /= 100.0
            numeric[index] = (plus - minus) / (2.0 * step)
        tape.set_param(name, original)

        err = relative_error(analytic[name], numeric, floor)
        report.errors[name] = err
        report.checked += err.size
        if err.size and err.max() > report.max_relative_error:
            report.max_relative_error = float(err.max())
            report.worst_param = name
            report.worst_index = np.unravel_index(int(err.argmax()), err.shape)

    tape.run(feeds)
    logger.debug(
        f"Gradient check over {report.checked} elements: max relative error "
        f"{report.max_relative_error:.3e} ({report.worst_param})"
    )
    return report
