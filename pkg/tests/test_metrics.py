import math

import numpy as np
import pytest

from core.errors import IllPosedProblemError, ShapeMismatchError
from evaluation.metrics import MetricReport, evaluate, mpsnr, mssim, sam


def psnr_reference(x, ref):
    values = []
    for c in range(x.shape[2]):
        mse = sum((a - b) ** 2 for a, b in zip(x[:, :, c].ravel(), ref[:, :, c].ravel())) / x[:, :, c].size
        values.append(10 * math.log10(1.0 / mse))
    return sum(values) / len(values)


def ssim_reference(x, ref):
    """Gaussian-window SSIM over interior pixels, population statistics."""
    radius, sigma = 5, 1.5
    offsets = np.arange(-radius, radius + 1)
    g = np.exp(-offsets ** 2 / (2 * sigma ** 2))
    g /= g.sum()
    window = np.outer(g, g)
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    scores = []
    for c in range(x.shape[2]):
        a, b = x[:, :, c], ref[:, :, c]
        values = []
        for i in range(radius, a.shape[0] - radius):
            for j in range(radius, a.shape[1] - radius):
                pa = a[i - radius:i + radius + 1, j - radius:j + radius + 1]
                pb = b[i - radius:i + radius + 1, j - radius:j + radius + 1]
                mu_a, mu_b = np.sum(window * pa), np.sum(window * pb)
                var_a = np.sum(window * pa * pa) - mu_a ** 2
                var_b = np.sum(window * pb * pb) - mu_b ** 2
                cov = np.sum(window * pa * pb) - mu_a * mu_b
                values.append(((2 * mu_a * mu_b + c1) * (2 * cov + c2))
                              / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)))
        scores.append(np.mean(values))
    return float(np.mean(scores))


def sam_reference(x, ref):
    angles = []
    for i in range(x.shape[0]):
        for j in range(x.shape[1]):
            u, v = x[i, j], ref[i, j]
            nu, nv = math.sqrt(float(u @ u)), math.sqrt(float(v @ v))
            if nu == 0 or nv == 0:
                continue
            angles.append(math.acos(max(-1.0, min(1.0, float(u @ v) / (nu * nv)))))
    return math.degrees(sum(angles) / len(angles))


def random_pair(seed, shape=(14, 15, 3)):
    rng = np.random.default_rng(seed)
    ref = rng.uniform(size=shape)
    x = np.clip(ref + rng.normal(scale=0.1, size=shape), 0, 1)
    return x, ref


class TestMPSNR:

    def test_identical_is_infinite(self, rng):
        x = rng.uniform(size=(4, 4, 3))
        assert mpsnr(x, x) == math.inf

    def test_constant_offset(self):
        x = np.full((4, 4, 2), 0.5)
        assert mpsnr(x, x + 0.1) == pytest.approx(20.0, abs=1e-9)

    @pytest.mark.parametrize("trial", range(20))
    def test_matches_reference(self, trial):
        x, ref = random_pair(trial)
        assert mpsnr(x, ref) == pytest.approx(psnr_reference(x, ref), abs=1e-9)

    def test_identical_band_left_out(self):
        ref = np.full((4, 4, 2), 0.5)
        x = ref.copy()
        x[:, :, 1] += 0.1
        assert mpsnr(x, ref) == pytest.approx(20.0, abs=1e-9)

    def test_decreases_with_noise_amplitude(self):
        rng = np.random.default_rng(8)
        ref = rng.uniform(0.2, 0.8, size=(16, 16, 3))
        noise = rng.normal(size=ref.shape)
        scores = [mpsnr(ref + amplitude * noise, ref) for amplitude in (0.01, 0.05, 0.2)]
        assert scores[0] > scores[1] > scores[2]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError) as err:
            mpsnr(np.zeros((4, 4, 3)), np.zeros((4, 4, 2)))
        assert err.value.field == "axis 2"


class TestMSSIM:

    def test_identical_is_one(self, rng):
        x = rng.uniform(size=(16, 16, 2))
        assert mssim(x, x) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("trial", range(20))
    def test_matches_reference(self, trial):
        x, ref = random_pair(100 + trial)
        assert mssim(x, ref) == pytest.approx(ssim_reference(x, ref), abs=1e-6)

    def test_noise_against_constant_is_dissimilar(self):
        ref = np.full((32, 32, 2), 0.5)
        x = np.random.default_rng(9).uniform(size=ref.shape)
        assert mssim(x, ref) < 0.2

    def test_too_small_for_window(self):
        with pytest.raises(ShapeMismatchError) as err:
            mssim(np.zeros((10, 12, 1)), np.zeros((10, 12, 1)))
        assert err.value.field == "height"


class TestSAM:

    def test_identical_is_zero(self, rng):
        x = rng.uniform(0.1, 1.0, size=(5, 5, 4))
        assert sam(x, x) == 0.0

    def test_scaled_spectra_have_zero_angle(self, rng):
        x = rng.uniform(0.1, 0.5, size=(3, 3, 4))
        assert sam(x, 2 * x) == pytest.approx(0.0, abs=1e-5)

    def test_orthogonal_spectra(self):
        x = np.zeros((1, 1, 2))
        ref = np.zeros((1, 1, 2))
        x[0, 0, 0], ref[0, 0, 1] = 1.0, 1.0
        assert sam(x, ref) == pytest.approx(90.0)

    def test_diagonal_against_axis_is_45_degrees(self):
        x = np.array([[[1.0, 1.0]]])
        ref = np.array([[[1.0, 0.0]]])
        assert sam(x, ref) == pytest.approx(45.0, abs=1e-9)

    @pytest.mark.parametrize("trial", range(5))
    def test_symmetric(self, trial):
        x, ref = random_pair(300 + trial)
        assert sam(x, ref) == sam(ref, x)

    def test_zero_pixels_excluded(self):
        x = np.ones((2, 1, 3))
        ref = np.ones((2, 1, 3))
        x[1, 0] = 0.0
        assert sam(x, ref) == 0.0

    def test_all_zero_is_ill_posed(self):
        with pytest.raises(IllPosedProblemError):
            sam(np.zeros((2, 2, 3)), np.ones((2, 2, 3)))

    @pytest.mark.parametrize("trial", range(20))
    def test_matches_reference(self, trial):
        x, ref = random_pair(200 + trial)
        assert sam(x, ref) == pytest.approx(sam_reference(x, ref), abs=1e-9)


class TestMetricReport:

    def test_self_comparison_text(self, rng):
        x = rng.uniform(0.1, 1.0, size=(12, 12, 3))
        assert evaluate(x, x).to_text() == "MPSNR = inf\nMSSIM = 1.0\nSAM   = 0.0"

    def test_frame_columns(self):
        frame = MetricReport(mpsnr=30.0, mssim=0.9, sam=2.5).to_frame()
        assert list(frame.columns) == ["mpsnr", "mssim", "sam"]
        assert frame.iloc[0]["sam"] == 2.5
