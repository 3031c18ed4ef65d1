import numpy as np
import pytest
from pydantic import ValidationError

from core.errors import ShapeMismatchError
from corruption.degradations import (
    CorruptionSpec,
    add_gaussian_noise,
    corrupt,
    downsample_observation,
    gaussian_noise_field,
    make_stripe_mask,
    sigma_from_8bit,
    upsample_bilinear,
    upsample_nearest,
)
from corruption.synthetic import make_synthetic_cube
from evaluation.metrics import mpsnr
from training.objectives import degrade_downsample


class TestGaussianNoise:

    def test_zero_sigma_is_identity(self, small_cube):
        np.testing.assert_array_equal(add_gaussian_noise(small_cube, 0.0, seed=1), small_cube)

    def test_output_clipped_to_unit_interval(self, small_cube):
        noisy = add_gaussian_noise(small_cube, sigma_from_8bit(100), seed=2)
        assert noisy.min() >= 0.0 and noisy.max() <= 1.0

    def test_deterministic_per_seed(self, small_cube):
        a = add_gaussian_noise(small_cube, 0.1, seed=5)
        np.testing.assert_array_equal(a, add_gaussian_noise(small_cube, 0.1, seed=5))
        assert not np.array_equal(a, add_gaussian_noise(small_cube, 0.1, seed=6))

    def test_unclipped_std_within_two_percent(self):
        sigma = 0.1
        field = gaussian_noise_field((200, 200, 10), sigma, seed=3)
        assert field.std() == pytest.approx(sigma, rel=0.02)

    def test_noise_is_the_added_field(self):
        x = np.full((20, 20, 2), 0.5)
        field = gaussian_noise_field(x.shape, 0.01, seed=4)
        np.testing.assert_allclose(add_gaussian_noise(x, 0.01, seed=4), np.clip(x + field, 0, 1))

    def test_eight_bit_conversion(self):
        assert sigma_from_8bit(100) == pytest.approx(0.392, abs=1e-3)
        assert sigma_from_8bit(25) == 25 / 255


class TestStripeMask:

    def test_no_stripes_all_ones(self):
        np.testing.assert_array_equal(make_stripe_mask((8, 10, 3), 0, 2, seed=1), np.ones((8, 10, 3)))

    @pytest.mark.parametrize("seed", range(5))
    def test_zero_fraction_counts_exactly(self, seed):
        shape, count, width = (12, 40, 6), 5, 3
        mask = make_stripe_mask(shape, count, width, band_range=(1, 5), seed=seed)
        assert np.sum(mask == 0) == count * width * shape[0] * 4

    def test_binary(self):
        mask = make_stripe_mask((6, 20, 2), 4, 2, seed=9)
        assert set(np.unique(mask)) <= {0.0, 1.0}

    def test_bands_outside_range_untouched(self):
        mask = make_stripe_mask((8, 16, 8), 3, 2, band_range=(1, 7), seed=0)
        assert np.all(mask[:, :, 0] == 1) and np.all(mask[:, :, 7] == 1)
        assert np.any(mask[:, :, 1] == 0)

    def test_stripes_are_full_columns(self):
        mask = make_stripe_mask((10, 16, 2), 2, 1, seed=4)
        zero_columns = np.where(mask[0, :, 0] == 0)[0]
        assert np.all(mask[:, zero_columns, :] == 0)

    def test_deterministic_per_seed(self):
        a = make_stripe_mask((4, 30, 2), 4, 2, seed=11)
        np.testing.assert_array_equal(a, make_stripe_mask((4, 30, 2), 4, 2, seed=11))

    def test_fixed_columns(self):
        mask = make_stripe_mask((4, 10, 1), 0, 2, columns=[1, 6])
        np.testing.assert_array_equal(mask[0, :, 0], [1, 0, 0, 1, 1, 1, 0, 0, 1, 1])

    def test_stripes_must_fit(self):
        with pytest.raises(ShapeMismatchError) as err:
            make_stripe_mask((4, 10, 1), 4, 3)
        assert err.value.field == "width"

    def test_band_range_checked(self):
        with pytest.raises(ShapeMismatchError) as err:
            make_stripe_mask((4, 10, 3), 1, 1, band_range=(2, 5))
        assert err.value.field == "band_range"


class TestDownsampleObservation:

    def test_alpha_one_identity(self, small_cube):
        np.testing.assert_array_equal(downsample_observation(small_cube, 1), small_cube)

    def test_constant_cube(self):
        np.testing.assert_allclose(downsample_observation(np.full((8, 8, 2), 0.4), 2), 0.4, atol=1e-15)

    def test_same_as_forward_model(self, small_cube):
        assert np.array_equal(downsample_observation(small_cube, 2), degrade_downsample(small_cube, 2))

    def test_nearest_baseline_shape(self, small_cube):
        low = downsample_observation(small_cube, 2)
        assert upsample_nearest(low, 2).shape == small_cube.shape

    def test_bilinear_baseline_shape_and_constants(self, small_cube):
        low = downsample_observation(small_cube, 2)
        assert upsample_bilinear(low, 2).shape == small_cube.shape
        np.testing.assert_allclose(upsample_bilinear(np.full((4, 4, 2), 0.3), 3), 0.3, atol=1e-15)

    def test_bilinear_beats_nearest_on_smooth_cube(self):
        rows, cols = np.meshgrid(np.arange(32), np.arange(32), indexing="ij")
        clean = np.stack([0.5 + 0.4 * np.sin((rows + 2 * cols + b) / 9.0) for b in range(3)], axis=-1)
        low = downsample_observation(clean, 2)
        assert mpsnr(upsample_bilinear(low, 2), clean) > mpsnr(upsample_nearest(low, 2), clean)


class TestCorrupt:

    def test_stripes_zero_filled_with_mask(self, small_cube):
        spec = CorruptionSpec(kind="stripes", stripe_count=2, stripe_width=1, seed=3)
        observed, mask = corrupt(small_cube, spec)
        np.testing.assert_array_equal(observed, small_cube * mask)

    def test_noise_has_no_mask(self, small_cube):
        _, mask = corrupt(small_cube, CorruptionSpec(kind="noise", sigma=0.05))
        assert mask is None

    def test_fields_of_other_kinds_rejected(self):
        with pytest.raises(ValidationError):
            CorruptionSpec(kind="noise", sigma=0.1, alpha=2)

    def test_kind_requires_its_fields(self):
        with pytest.raises(ValidationError):
            CorruptionSpec(kind="downsample")


class TestSyntheticCube:

    def test_range_and_shape(self):
        cube = make_synthetic_cube(32, 24, 8, seed=0)
        assert cube.shape == (32, 24, 8)
        assert cube.min() >= 0.05 and cube.max() <= 0.95

    def test_deterministic(self):
        np.testing.assert_array_equal(make_synthetic_cube(16, 16, 4, seed=2), make_synthetic_cube(16, 16, 4, seed=2))

    def test_spatially_structured(self):
        cube = make_synthetic_cube(32, 32, 8, seed=1)
        neighbour = np.mean(np.abs(np.diff(cube, axis=1)))
        shuffled = np.random.default_rng(0).permutation(cube.reshape(-1, 8)).reshape(cube.shape)
        assert neighbour < np.mean(np.abs(np.diff(shuffled, axis=1)))
