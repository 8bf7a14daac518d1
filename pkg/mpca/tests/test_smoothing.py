import numpy as np
from django.test import SimpleTestCase, tag

from ..core import ObservationSet, TimeGrid
from ..exceptions import ArgumentError, InsufficientDataError
from ..smoothing import (
    NOISE_FLOOR, MeanFunctions, SmoothingData, diagonal_band, diagonal_limit, estimate_autocov,
    estimate_autocov_field, estimate_mean, estimate_means, estimate_noise_variances, local_linear,
    noise_floor, select_bandwidth,
)
from ..simgen import SimConfig, gen_panel


def create_level_panel(
    J: int = 100, count: int = 8, sigma: float = 0.5, seed: int = 3, rho: float = 0.0,
) -> ObservationSet:
    """
    Create a one-subject panel whose curves are random constants a_j
    observed at `count` uniform times with noise of standard deviation `sigma`.
    The levels form an AR(1) series with coefficient `rho` and unit variance.
    """
    rng = np.random.default_rng(seed)
    levels = rng.normal(size=J)
    for j in range(1, J if rho else 0):
        levels[j] = rho * levels[j - 1] + np.sqrt(1 - rho ** 2) * levels[j]
    curves = {}
    for j in range(J):
        times = rng.uniform(size=count)
        curves[(0, j)] = (times, levels[j] + sigma * rng.normal(size=count))
    return ObservationSet.from_curves(curves, 1, J)


class LocalLinearTests(SimpleTestCase):
    def test_linear_function_is_reproduced(self):
        times = np.linspace(0, 1, 40)
        data = SmoothingData.aggregate(times, 2 * times + 1)
        grid = np.linspace(0, 1, 7)
        np.testing.assert_allclose(local_linear(data, grid, 0.2), 2 * grid + 1, atol=1e-10)

    def test_plane_is_reproduced_in_two_dimensions(self):
        mesh = np.array([(t, s) for t in np.linspace(0, 1, 9) for s in np.linspace(0, 1, 9)])
        data = SmoothingData.aggregate(mesh, 1 + mesh[:, 0] - 3 * mesh[:, 1])
        points = np.array([[0.3, 0.6], [0.9, 0.1]])
        np.testing.assert_allclose(local_linear(data, points, 0.3), [-0.5, 1.6], atol=1e-10)

    def test_duplicates_are_aggregated(self):
        data = SmoothingData.aggregate([0.1, 0.1, 0.5], [1.0, 3.0, 2.0])
        np.testing.assert_array_equal(data.counts, [2, 1])
        np.testing.assert_array_equal(data.values, [2.0, 2.0])
        self.assertAlmostEqual(data.within_ss, 2.0)

    def test_narrow_bandwidth_is_widened_locally(self):
        """
        A bandwidth narrower than the design gap still gives a finite fit.
        """
        data = SmoothingData.aggregate([0.0, 0.5, 1.0], [0.0, 1.0, 2.0])
        with self.assertLogs('mpca.smoothing', 'WARNING') as logs:
            estimates = local_linear(data, np.array([0.25]), 0.01)
        self.assertIn('widening bandwidth', logs.output[0])
        self.assertTrue(np.all(np.isfinite(estimates)))
        self.assertAlmostEqual(float(estimates[0]), 0.5)

    def test_gcv_picks_a_candidate(self):
        rng = np.random.default_rng(0)
        times = rng.uniform(size=200)
        data = SmoothingData.aggregate(times, np.sin(2 * np.pi * times) + 0.1 * rng.normal(size=200))
        h = select_bandwidth(data)
        self.assertGreater(h, 0)
        self.assertLess(h, 1)


class MeanTests(SimpleTestCase):
    def test_constant_mean(self):
        grid = TimeGrid.uniform(11)
        times = np.linspace(0, 1, 30)
        mean = estimate_mean(times, np.full(30, 4.0), grid)
        np.testing.assert_allclose(mean, 4.0, atol=1e-10)

    def test_too_few_distinct_times(self):
        grid = TimeGrid.uniform(5)
        with self.assertRaises(InsufficientDataError) as ctx:
            estimate_mean([0.2, 0.2, 0.4], [1.0, 2.0, 3.0], grid, subject=2)
        self.assertEqual(ctx.exception.subject, 2)

    def test_per_subject_means(self):
        grid = TimeGrid.uniform(6)
        times = np.linspace(0, 1, 20)
        obs = ObservationSet.from_curves({(0, 0): (times, times), (1, 0): (times, -times)})
        means = estimate_means(obs, grid, bandwidth=0.3)
        np.testing.assert_allclose(means.values[0], grid.points, atol=1e-10)
        np.testing.assert_allclose(means.at(1, np.array([0.5])), [-0.5], atol=1e-10)

    def test_non_positive_bandwidth(self):
        with self.assertRaises(ArgumentError):
            estimate_mean(np.linspace(0, 1, 5), np.zeros(5), TimeGrid.uniform(3), bandwidth=0)


class AutocovTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        cls.obs = create_level_panel()
        cls.grid = TimeGrid.uniform(11)
        cls.means = estimate_means(cls.obs, cls.grid, bandwidth=0.3)

    def test_lag_zero_surface_is_symmetric(self):
        surface = estimate_autocov(self.obs, self.means, 0, self.grid, bandwidth=0.3)[0]
        np.testing.assert_allclose(surface, surface.T)

    def test_negative_lag_is_transpose(self):
        forward = estimate_autocov(self.obs, self.means, 1, self.grid, bandwidth=0.3)
        backward = estimate_autocov(self.obs, self.means, -1, self.grid, bandwidth=0.3)
        np.testing.assert_allclose(backward[0], forward[0].T)

    def test_lag_beyond_panel(self):
        with self.assertRaises(ArgumentError):
            estimate_autocov(self.obs, self.means, self.obs.J, self.grid)

    def test_field_lags(self):
        field = estimate_autocov_field(self.obs, self.means, 2, self.grid, bandwidth=0.3)
        self.assertEqual(field.lags, 2)
        np.testing.assert_allclose(field.lag(0, -1), field.lag(0, 1).T)
        with self.assertRaises(ArgumentError):
            field.lag(0, 2)


class NoiseFloorTests(SimpleTestCase):
    def test_floor_scales_with_data_variance(self):
        self.assertAlmostEqual(noise_floor(np.array([0.0, 2.0])), NOISE_FLOOR * 1.0)
        self.assertEqual(noise_floor(np.ones(4)), NOISE_FLOOR ** 2)

    def test_noise_free_curves_stay_positive(self):
        grid = TimeGrid.uniform(11)
        times = np.linspace(0, 1, 15)
        obs = ObservationSet.from_curves({(0, j): (times, np.full(15, float(j % 3))) for j in range(12)})
        means = MeanFunctions(grid, np.full((1, 11), 1.0))
        sigma2 = estimate_noise_variances(obs, means, bandwidth=0.3)
        self.assertGreater(float(sigma2[0]), 0.0)


def create_grid_pairs(function, size: int = 31):
    """
    All ordered pairs (t, s), t ≠ s, of a uniform grid with values function(t, s).
    """
    points = np.linspace(0, 1, size)
    pairs = np.array([(t, s) for t in points for s in points if t != s])
    return pairs, function(pairs[:, 0], pairs[:, 1])


class DiagonalLimitTests(SimpleTestCase):
    def test_ridge_is_not_flattened(self):
        """
        A covariance that falls off quickly across the diagonal keeps its
        value on the diagonal; a plane fit around t = s pulls it down.
        """
        pairs = create_grid_pairs(lambda t, s: np.cos(2 * np.pi * (t - s)))
        centres = np.linspace(0.25, 0.75, 6)
        np.testing.assert_allclose(diagonal_limit(pairs, centres, 0.2), 1.0, atol=0.01)
        flattened = local_linear(SmoothingData.aggregate(*pairs), np.column_stack([centres, centres]), 0.2)
        self.assertTrue(np.all(flattened < 0.95))

    def test_band_on_a_grid(self):
        pairs, _ = create_grid_pairs(np.subtract)
        self.assertAlmostEqual(diagonal_band(pairs), 0.075)

    def test_needs_off_diagonal_pairs(self):
        with self.assertRaises(InsufficientDataError):
            diagonal_band(np.array([[0.2, 0.2], [0.5, 0.5]]))


class NoiseVarianceTests(SimpleTestCase):
    def test_level_panel(self):
        obs = create_level_panel(J=400)
        means = estimate_means(obs, TimeGrid.uniform(11), bandwidth=0.3)
        sigma2 = estimate_noise_variances(obs, means, bandwidth=0.3)
        self.assertAlmostEqual(float(sigma2[0]), 0.25, delta=0.06)

    def test_pure_noise_matches_sample_variance(self):
        rng = np.random.default_rng(8)
        curves = {(0, j): (rng.uniform(size=8), 1.5 * rng.normal(size=8)) for j in range(1000)}
        obs = ObservationSet.from_curves(curves, 1, 1000)
        means = MeanFunctions(TimeGrid.uniform(11), np.zeros((1, 11)))
        sigma2 = estimate_noise_variances(obs, means, bandwidth=0.3)
        sample = float(np.var(obs.values))
        self.assertAlmostEqual(float(sigma2[0]) / sample, 1.0, delta=0.15)

    def test_grows_with_noise_level(self):
        grid = TimeGrid.uniform(11)
        estimates = []
        for sigma in (0.25, 0.5, 1.0):
            obs = create_level_panel(J=200, sigma=sigma)
            means = estimate_means(obs, grid, bandwidth=0.3)
            estimates.append(float(estimate_noise_variances(obs, means, bandwidth=0.3)[0]))
        self.assertEqual(estimates, sorted(estimates))
        self.assertGreater(estimates[2], 4 * estimates[0])


@tag('slow')
class LaggedCovarianceTests(SimpleTestCase):
    def central(self, surface):
        return float(surface[3:8, 3:8].mean())

    def test_white_levels_have_small_lag_one(self):
        obs = create_level_panel(J=400, seed=4)
        grid = TimeGrid.uniform(11)
        means = estimate_means(obs, grid, bandwidth=0.3)
        field = estimate_autocov_field(obs, means, 2, grid, bandwidth=0.3)
        lag0, lag1 = self.central(field.lag(0, 0)), self.central(field.lag(0, 1))
        self.assertAlmostEqual(lag0, 1.0, delta=0.25)
        self.assertLess(abs(lag1), 0.15 * lag0)

    def test_ar1_levels_halve_at_lag_one(self):
        obs = create_level_panel(J=1000, seed=5, rho=0.5)
        grid = TimeGrid.uniform(11)
        means = estimate_means(obs, grid, bandwidth=0.3)
        field = estimate_autocov_field(obs, means, 2, grid, bandwidth=0.3)
        ratio = self.central(field.lag(0, 1)) / self.central(field.lag(0, 0))
        self.assertAlmostEqual(ratio, 0.5, delta=0.1)


@tag('slow')
class DenseNoiseTests(SimpleTestCase):
    def test_noise_within_half_of_truth(self):
        """
        Ninety densely sampled curves per subject: every subject's noise
        variance is estimated within ±50%.
        """
        grid = TimeGrid.uniform(51)
        for seed in (500, 501):
            with self.subTest(seed=seed):
                panel = gen_panel(SimConfig(J=90, n_min=10, n_max=15, seed=seed))
                means = estimate_means(panel.obs, grid)
                ratios = estimate_noise_variances(panel.obs, means) / panel.noise_variances
                self.assertTrue(np.all((ratios >= 0.5) & (ratios <= 1.5)), ratios)
