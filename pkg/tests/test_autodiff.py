import numpy as np
import pytest

from autodiff import kernels
from autodiff.init import LINEAR_GAIN, ParamSpec, init_params, leaky_relu_gain
from autodiff.tape import Tape
from core.errors import GraphError, NonFiniteError, ShapeMismatchError


def conv_reference(x, kernel, stride, pad):
    """Nested-loop reflection-padded cross-correlation."""
    spatial = x.ndim - 1
    padded = np.pad(x, [(pad, pad)] * spatial + [(0, 0)], mode="reflect")
    taps = kernel.shape[:spatial]
    out_ext = [(padded.shape[a] - taps[a]) // stride + 1 for a in range(spatial)]
    f_in, f_out = kernel.shape[-2:]
    out = np.zeros(out_ext + [f_out])
    for pos in np.ndindex(*out_ext):
        for tap in np.ndindex(*taps):
            src = tuple(p * stride + t for p, t in zip(pos, tap))
            for i in range(f_in):
                for o in range(f_out):
                    out[pos + (o,)] += padded[src + (i,)] * kernel[tap + (i, o)]
    return out


class TestReflectPad:

    @pytest.mark.parametrize("extent,pad", [(5, 1), (5, 2), (4, 3), (2, 1)])
    def test_matches_numpy_reflect(self, rng, extent, pad):
        x = rng.normal(size=(extent, 3, 2))
        expected = np.pad(x, [(pad, pad), (0, 0), (0, 0)], mode="reflect")
        np.testing.assert_array_equal(kernels.reflect_pad(x, [pad]), expected)

    def test_single_sample_repeats(self):
        np.testing.assert_array_equal(kernels.reflect_indices(1, 2), np.zeros(5, dtype=int))

    def test_backward_is_adjoint(self, rng):
        x = rng.normal(size=(5, 6, 2))
        g = rng.normal(size=(7, 10, 2))
        lhs = np.sum(kernels.reflect_pad(x, [1, 2]) * g)
        rhs = np.sum(x * kernels.reflect_pad_backward(g, [1, 2], x.shape))
        assert lhs == pytest.approx(rhs, rel=1e-12)


class TestConvForward:

    def test_identity_kernel(self, rng):
        x = rng.normal(size=(6, 5, 1))
        out = kernels.conv_forward(x, np.ones((1, 1, 1, 1)), stride=1, pad=0)
        np.testing.assert_array_equal(out, x)

    def test_constant_image_interior(self):
        x = np.full((5, 5, 1), 0.3)
        out = kernels.conv_forward(x, np.ones((3, 3, 1, 1)), stride=1, pad=0)
        assert out[1, 1, 0] == pytest.approx(9 * 0.3, abs=1e-12)

    def test_matches_nested_loops_example(self, rng):
        x = rng.normal(size=(6, 6, 4))
        kernel = rng.normal(size=(3, 3, 4, 2))
        np.testing.assert_allclose(
            kernels.conv_forward(x, kernel, 1, 0), conv_reference(x, kernel, 1, 0), atol=1e-10, rtol=0,
        )

    @pytest.mark.parametrize("trial", range(20))
    def test_matches_nested_loops_2d(self, trial):
        rng = np.random.default_rng(100 + trial)
        k = int(rng.choice([1, 3]))
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, k // 2 + 1))
        x = rng.normal(size=(int(rng.integers(5, 9)), int(rng.integers(5, 9)), int(rng.integers(1, 5))))
        kernel = rng.normal(size=(k, k, x.shape[-1], int(rng.integers(1, 4))))
        np.testing.assert_allclose(
            kernels.conv_forward(x, kernel, stride, pad), conv_reference(x, kernel, stride, pad),
            atol=1e-10, rtol=0,
        )

    @pytest.mark.parametrize("trial", range(20))
    def test_matches_nested_loops_3d(self, trial):
        rng = np.random.default_rng(200 + trial)
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        x = rng.normal(size=(int(rng.integers(4, 7)), int(rng.integers(4, 7)), int(rng.integers(3, 6)),
                             int(rng.integers(1, 3))))
        kernel = rng.normal(size=(3, 3, 3, x.shape[-1], int(rng.integers(1, 3))))
        np.testing.assert_allclose(
            kernels.conv_forward(x, kernel, stride, pad), conv_reference(x, kernel, stride, pad),
            atol=1e-10, rtol=0,
        )

    def test_output_extents(self):
        assert kernels.conv_output_shape((9, 8, 3), (3, 3, 3, 5), stride=2, pad=1) == (5, 4, 5)

    def test_channel_mismatch_names_dimension(self):
        with pytest.raises(ShapeMismatchError) as err:
            kernels.conv_forward(np.zeros((5, 5, 3)), np.zeros((3, 3, 2, 1)))
        assert err.value.field == "input channels"

    def test_kernel_larger_than_padded_input(self):
        with pytest.raises(ShapeMismatchError) as err:
            kernels.conv_forward(np.zeros((2, 6, 1)), np.zeros((5, 5, 1, 1)), pad=1)
        assert err.value.field == "spatial axis 0"


class TestConvBackward:

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1)])
    def test_input_gradient_is_adjoint(self, rng, stride, pad):
        x = rng.normal(size=(7, 6, 3))
        kernel = rng.normal(size=(3, 3, 3, 2))
        out = kernels.conv_forward(x, kernel, stride, pad)
        g = rng.normal(size=out.shape)
        gx, gk = kernels.conv_backward(g, x, kernel, stride, pad)
        assert np.sum(out * g) == pytest.approx(np.sum(x * gx), rel=1e-10)
        assert np.sum(out * g) == pytest.approx(np.sum(kernel * gk), rel=1e-10)

    def test_skips_unneeded_gradients(self, rng):
        x = rng.normal(size=(5, 5, 2))
        kernel = rng.normal(size=(3, 3, 2, 1))
        g = np.ones((3, 3, 1))
        gx, gk = kernels.conv_backward(g, x, kernel, need_input=False)
        assert gx is None and gk.shape == kernel.shape


class TestLeakyRelu:

    @pytest.mark.parametrize("value,expected", [(1.0, 1.0), (-1.0, -0.1), (0.0, 0.0)])
    def test_examples(self, value, expected):
        assert kernels.leaky_relu(np.array(value), 0.1) == pytest.approx(expected)

    def test_is_max_of_v_and_slope_v(self, rng):
        x = rng.normal(size=100)
        np.testing.assert_array_equal(kernels.leaky_relu(x, 0.2), np.maximum(x, 0.2 * x))


class TestUpsample:

    def test_nearest_replicates_blocks(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])[..., None]
        out = kernels.upsample(x, (2, 2), "nearest")[..., 0]
        expected = np.array([[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], dtype=float)
        np.testing.assert_array_equal(out, expected)

    @pytest.mark.parametrize("factor", [2, 3])
    def test_linear_keeps_constants(self, factor):
        x = np.full((3, 4, 2), 0.7)
        np.testing.assert_allclose(kernels.upsample(x, (factor, factor), "linear"), 0.7, atol=1e-15)

    @pytest.mark.parametrize("factor", [2, 3])
    def test_nearest_then_subsample_is_identity(self, rng, factor):
        x = rng.normal(size=(3, 5, 2))
        up = kernels.upsample(x, (factor, factor), "nearest")
        np.testing.assert_array_equal(up[::factor, ::factor], x)

    def test_linear_row_half_pixel_centres(self):
        x = np.array([[0.0, 1.0]])[..., None]
        out = kernels.upsample(x, (1, 2), "linear")[0, :, 0]
        np.testing.assert_allclose(out, [0.0, 0.25, 0.75, 1.0], atol=1e-12)

    def test_trilinear_shape(self, rng):
        x = rng.normal(size=(2, 3, 4, 5))
        assert kernels.upsample(x, (2, 2, 2), "linear").shape == (4, 6, 8, 5)

    @pytest.mark.parametrize("mode", ["nearest", "linear"])
    def test_backward_is_adjoint(self, rng, mode):
        x = rng.normal(size=(3, 4, 2, 3))
        out = kernels.upsample(x, (2, 2, 2), mode)
        g = rng.normal(size=out.shape)
        back = kernels.upsample_backward(g, x.shape, (2, 2, 2), mode)
        assert np.sum(out * g) == pytest.approx(np.sum(x * back), rel=1e-12)


class TestBackward:

    def test_sum_gives_ones(self, rng):
        tape = Tape()
        x = tape.param("x", rng.normal(size=(3, 4)))
        loss = tape.apply("sum", x)
        tape.run({})
        np.testing.assert_array_equal(tape.backward(loss)["x"], np.ones((3, 4)))

    def test_half_square_gives_x(self, rng):
        value = rng.normal(size=(5,))
        tape = Tape()
        x = tape.param("x", value)
        loss = tape.apply("scale", tape.apply("sum", tape.apply("square", x)), factor=0.5)
        tape.run({})
        np.testing.assert_allclose(tape.backward(loss)["x"], value, rtol=1e-15)

    def test_inputs_and_frozen_params_get_no_gradient(self, rng):
        tape = Tape()
        z = tape.input("z", (4,))
        w = tape.param("w", rng.normal(size=(4,)))
        frozen = tape.param("frozen", rng.normal(size=(4,)), trainable=False)
        loss = tape.apply("sum", tape.apply("mul", tape.apply("mul", z, w), frozen))
        tape.run({"z": np.ones(4)})
        grads = tape.backward(loss)
        assert set(grads) == {"w"}

    def test_reused_node_accumulates(self, rng):
        value = rng.normal(size=(3,))
        tape = Tape()
        x = tape.param("x", value)
        loss = tape.apply("sum", tape.apply("add", x, x))
        tape.run({})
        np.testing.assert_array_equal(tape.backward(loss)["x"], np.full(3, 2.0))

    def test_non_scalar_loss_rejected(self):
        tape = Tape()
        x = tape.param("x", np.ones(3))
        tape.run({})
        with pytest.raises(GraphError):
            tape.backward(x)

    def test_requires_forward_pass(self):
        tape = Tape()
        loss = tape.apply("sum", tape.param("x", np.ones(3)))
        with pytest.raises(GraphError):
            tape.backward(loss)

    def test_unreachable_param_gets_zeros(self):
        tape = Tape()
        x = tape.param("x", np.ones(2))
        tape.param("unused", np.ones(3))
        loss = tape.apply("sum", x)
        tape.run({})
        np.testing.assert_array_equal(tape.backward(loss)["unused"], np.zeros(3))


class TestTape:

    def test_replay_is_bit_identical(self, rng):
        tape = Tape()
        z = tape.input("z", (6, 6, 2))
        k = tape.param("k", rng.normal(size=(3, 3, 2, 3)))
        out = tape.apply("sigmoid", tape.leaky_relu(tape.conv(z, k, stride=2, pad=1), 0.1))
        feed = {"z": rng.normal(size=(6, 6, 2))}
        tape.run(feed)
        first = tape.value(out).copy()
        tape.run(feed)
        assert np.array_equal(first, tape.value(out))

    def test_missing_feed(self):
        tape = Tape()
        tape.input("z", (2,))
        with pytest.raises(GraphError):
            tape.run({})

    def test_feed_shape_checked(self):
        tape = Tape()
        tape.input("z", (2, 2))
        with pytest.raises(ShapeMismatchError):
            tape.run({"z": np.zeros((3, 2))})

    def test_non_finite_feed_rejected(self):
        tape = Tape()
        tape.input("z", (2,))
        with pytest.raises(NonFiniteError):
            tape.run({"z": np.array([1.0, np.nan])})

    def test_elementwise_shape_mismatch_names_axis(self):
        tape = Tape()
        a = tape.input("a", (2, 3))
        b = tape.input("b", (2, 4))
        with pytest.raises(ShapeMismatchError) as err:
            tape.apply("add", a, b)
        assert err.value.field == "axis 1"

    def test_unknown_op(self):
        with pytest.raises(GraphError):
            Tape().apply("softmax")

    def test_set_param_checks_shape(self):
        tape = Tape()
        tape.param("w", np.zeros((2, 2)))
        with pytest.raises(ShapeMismatchError):
            tape.set_param("w", np.zeros(3))


class TestInitParams:

    def test_within_fan_in_bounds(self):
        specs = [ParamSpec("a.weight", (3, 3, 4, 8), 36), ParamSpec("a.bias", (8,), 36)]
        params = init_params(5, specs)
        for value in params.values():
            assert np.all(np.abs(value) <= 1.0 / 6.0)

    def test_same_seed_same_values(self):
        specs = [ParamSpec("w", (4, 4), 4)]
        np.testing.assert_array_equal(init_params(9, specs)["w"], init_params(9, specs)["w"])

    def test_different_seeds_differ(self):
        specs = [ParamSpec("w", (4, 4), 4)]
        assert not np.array_equal(init_params(1, specs)["w"], init_params(2, specs)["w"])

    def test_rejects_non_positive_fan_in(self):
        with pytest.raises(ValueError):
            init_params(0, [ParamSpec("w", (2,), 0)])

    def test_rejects_non_positive_gain(self):
        with pytest.raises(ValueError):
            init_params(0, [ParamSpec("w", (2,), 4, gain=0.0)])

    def test_gain_scales_bound(self):
        plain = init_params(3, [ParamSpec("w", (500,), 16)])["w"]
        scaled = init_params(3, [ParamSpec("w", (500,), 16, gain=LINEAR_GAIN)])["w"]
        np.testing.assert_allclose(scaled, LINEAR_GAIN * plain, rtol=1e-12)
        assert np.all(np.abs(scaled) <= LINEAR_GAIN / 4.0)

    def test_draws_are_zero_mean(self):
        bound = 1.0 / 6.0
        draws = init_params(11, [ParamSpec("w", (10_000,), 36)])["w"]
        standard_error = bound / np.sqrt(3.0) / np.sqrt(draws.size)
        assert abs(draws.mean()) < 3.0 * standard_error
        assert draws.std() == pytest.approx(bound / np.sqrt(3.0), rel=0.05)

    def test_leaky_relu_gain(self):
        assert leaky_relu_gain(0.0) == pytest.approx(np.sqrt(6.0))
        assert leaky_relu_gain(1.0) == pytest.approx(LINEAR_GAIN)
        assert leaky_relu_gain(0.1) < leaky_relu_gain(0.0)
