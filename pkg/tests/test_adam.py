import math

import numpy as np
import pytest

from core.errors import NonFiniteError, ShapeMismatchError
from training.adam import AdamState, adam_step


def scalar_adam(theta, grads, lr, beta1, beta2, eps):
    """Textbook scalar ADAM over a sequence of gradients."""
    m = v = 0.0
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        theta -= lr * (m / (1 - beta1 ** t)) / (math.sqrt(v / (1 - beta2 ** t)) + eps)
    return theta


class TestAdamStep:

    def test_first_step_moves_by_lr_times_sign(self):
        state = AdamState(lr=0.01)
        params, state = adam_step(state, {"w": np.array([1.0, -2.0])}, {"w": np.array([3.0, -0.5])})
        np.testing.assert_allclose(params["w"], [1.0 - 0.01, -2.0 + 0.01], rtol=1e-6)
        assert state.step == 1

    def test_zero_gradient_leaves_params(self):
        params, _ = adam_step(AdamState(), {"w": np.array([0.4, 0.2])}, {"w": np.zeros(2)})
        np.testing.assert_array_equal(params["w"], [0.4, 0.2])

    def test_matches_scalar_reference(self, rng):
        grads = rng.normal(size=12)
        state = AdamState(lr=0.05, beta1=0.8, beta2=0.99, eps=1e-7)
        params = {"w": np.array([0.3])}
        for g in grads:
            params, state = adam_step(state, params, {"w": np.array([g])})
        expected = scalar_adam(0.3, grads, 0.05, 0.8, 0.99, 1e-7)
        assert params["w"][0] == pytest.approx(expected, rel=1e-12)

    def test_quadratic_trajectory_matches_scalar_reference(self):
        lr, beta1, beta2, eps = 0.1, 0.9, 0.999, 1e-8
        state = AdamState(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        params = {"w": np.array([0.0])}
        theta, m, v = 0.0, 0.0, 0.0
        for t in range(1, 51):
            params, state = adam_step(state, params, {"w": 2.0 * (params["w"] - 3.0)})
            g = 2.0 * (theta - 3.0)
            m = beta1 * m + (1 - beta1) * g
            v = beta2 * v + (1 - beta2) * g * g
            theta -= lr * (m / (1 - beta1 ** t)) / (math.sqrt(v / (1 - beta2 ** t)) + eps)
            assert abs(params["w"][0] - theta) < 1e-10
        assert abs(params["w"][0] - 3.0) < 3.0

    def test_step_size_bounded(self, rng):
        lr, beta1, beta2 = 0.01, 0.9, 0.999
        gamma = beta1 ** 2 / beta2
        state = AdamState(lr=lr, beta1=beta1, beta2=beta2)
        params = {"w": rng.normal(size=50)}
        for t in range(1, 30):
            grads = {"w": rng.normal(scale=10.0 ** rng.integers(-3, 3), size=50)}
            new_params, state = adam_step(state, params, grads)
            bound = (lr * (1 - beta1) / math.sqrt(1 - beta2)
                     * math.sqrt((1 - gamma ** t) / (1 - gamma))
                     * math.sqrt(1 - beta2 ** t) / (1 - beta1 ** t))
            assert np.max(np.abs(new_params["w"] - params["w"])) <= bound * (1 + 1e-9)
            params = new_params

    def test_inputs_not_mutated(self):
        params = {"w": np.array([1.0])}
        state = AdamState()
        adam_step(state, params, {"w": np.array([1.0])})
        assert params["w"][0] == 1.0 and state.step == 0 and state.m == {}

    def test_non_finite_gradient_names_parameter(self):
        with pytest.raises(NonFiniteError) as err:
            adam_step(AdamState(), {"enc0.down.weight": np.zeros(2)}, {"enc0.down.weight": np.array([np.nan, 0.0])})
        assert err.value.field == "enc0.down.weight"

    def test_missing_gradient(self):
        with pytest.raises(ShapeMismatchError):
            adam_step(AdamState(), {"w": np.zeros(2)}, {})

    @pytest.mark.parametrize("kwargs", [{"lr": 0}, {"beta1": 1.0}, {"beta2": 0.0}, {"eps": -1}])
    def test_invalid_hyperparameters(self, kwargs):
        with pytest.raises(ValueError):
            AdamState(**kwargs)
