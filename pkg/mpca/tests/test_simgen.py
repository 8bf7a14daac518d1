import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from ..core import FrequencyGrid, TimeGrid
from ..exceptions import ArgumentError
from ..simgen import (
    PrecisionSpec, SimConfig, TrueFilters, filter_weights, fourier_slot, gen_basis, gen_panel,
    gen_precision, gen_scores, population_spectral_fields,
)


def small_config(**changes) -> SimConfig:
    """
    A quick configuration: three subjects, twelve curves and a short
    energy calibration.
    """
    values = dict(p=3, J=12, kappa=1.0, calibration_curves=200, burn_in=50, seed=3)
    values.update(changes)
    return SimConfig(**values)


def noise_draws(panel) -> list:
    """
    Observed value minus the latent curve at its sampling site, per subject.
    """
    sites = np.rint(panel.obs.times * (panel.cfg.grid_size - 1)).astype(int)
    noise = panel.obs.values - panel.curves[panel.obs.subjects, panel.obs.curves, sites]
    return [noise[panel.obs.subjects == i] for i in range(panel.cfg.p)]


def lag_one_autocorrelation(series: np.ndarray) -> np.ndarray:
    centred = series - series.mean(axis=0)
    return np.sum(centred[1:] * centred[:-1], axis=0) / np.sum(centred ** 2, axis=0)


class PrecisionTests(SimpleTestCase):
    def test_diagonal_value(self):
        spec = gen_precision(5, 1, 3.0, 0.1, 0.35, np.random.default_rng(0))
        np.testing.assert_allclose(np.diag(spec.theta), np.exp(0.1) / 5, atol=1e-12)
        self.assertAlmostEqual(spec.theta[0, 0], 0.22103, places=5)

    def test_no_edges_without_kappa(self):
        spec = gen_precision(4, 2, 0.0, 0.1, 0.35, np.random.default_rng(1))
        self.assertEqual(spec.edges, ())
        np.testing.assert_array_equal(spec.theta, np.diag(np.diag(spec.theta)))

    def test_mean_edge_count(self):
        rng = np.random.default_rng(2)
        counts = [len(gen_precision(5, 1, 3.0, 0.1, 0.35, rng).edges) for _ in range(1000)]
        self.assertAlmostEqual(float(np.mean(counts)), 6.0, delta=0.5)

    def test_edges_carry_scaled_strength(self):
        spec = gen_precision(6, 3, 6.0, 0.1, 0.35, np.random.default_rng(4))
        base = np.exp(0.3) / 5
        for a, b in spec.edges:
            self.assertTrue(0.1 * base <= abs(spec.theta[a, b]) <= 0.35 * base)
        np.testing.assert_allclose(spec.covariance @ spec.theta, np.eye(6), atol=1e-10)

    def test_invalid_radius_range(self):
        with self.assertRaises(ArgumentError):
            gen_precision(3, 1, 1.0, 0.4, 0.2, np.random.default_rng(0))


class ScoreTests(SimpleTestCase):
    def setUp(self):
        self.spec = PrecisionSpec(np.eye(3), ())

    def test_independent_scores(self):
        path = gen_scores([self.spec], 0.0, 500, 0, 1, np.random.default_rng(0))[0]
        self.assertEqual(path.shape, (500, 3))
        self.assertTrue(np.all(np.abs(lag_one_autocorrelation(path)) <= 0.15))

    def test_ar1_autocorrelation(self):
        path = gen_scores([self.spec], 0.5, 500, 0, 1, np.random.default_rng(1))[0]
        np.testing.assert_allclose(lag_one_autocorrelation(path), 0.5, atol=0.1)

    def test_path_length_includes_lags(self):
        paths = gen_scores([self.spec, self.spec], 0.5, 20, [2, 0], 1, np.random.default_rng(0))
        self.assertEqual([path.shape[0] for path in paths], [24, 20])

    def test_nonlinear_case_differs_and_stays_bounded(self):
        linear = gen_scores([self.spec], 0.5, 500, 0, 1, np.random.default_rng(5))[0]
        nonlinear = gen_scores([self.spec], 0.5, 500, 0, 3, np.random.default_rng(5))[0]
        self.assertFalse(np.allclose(linear, nonlinear))
        self.assertLess(float(np.max(np.abs(nonlinear))), 50.0)

    def test_unknown_case(self):
        with self.assertRaises(ArgumentError):
            gen_scores([self.spec], 0.5, 10, 0, 4, np.random.default_rng(0))


class BasisTests(SimpleTestCase):
    def test_weights(self):
        weights = filter_weights(1)
        self.assertAlmostEqual(weights[1] ** 2, 1 / (1 + 2 * np.exp(-0.5)), places=10)
        self.assertAlmostEqual(weights[1] ** 2, 0.4519, places=4)
        self.assertAlmostEqual(float(np.sum(weights ** 2)), 1.0)

    def test_fluctuation_of_last_subject(self):
        times = np.linspace(0, 1, 9)
        block = TrueFilters(3, (0,)).on(times)[0]
        np.testing.assert_allclose(block[2, 0], fourier_slot(0, times) * (1 + np.sin(times)))

    def test_slots_are_orthonormal(self):
        grid = TimeGrid.uniform(401)
        slots = np.array([fourier_slot(s, grid.points) for s in range(4)])
        gram = (slots * grid.weights) @ slots.T
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-8)

    def test_basis_shapes(self):
        filters, on_grid = gen_basis(4, 2, [1, 0], np.linspace(0, 1, 31))
        self.assertEqual(filters.K, 2)
        self.assertEqual([block.shape for block in on_grid], [(4, 3, 31), (4, 1, 31)])


class PanelTests(SimpleTestCase):
    def test_same_seed_same_panel(self):
        first = gen_panel(small_config())
        second = gen_panel(small_config())
        np.testing.assert_array_equal(first.obs.values, second.obs.values)
        np.testing.assert_array_equal(first.obs.times, second.obs.times)
        third = gen_panel(small_config(seed=4))
        self.assertFalse(np.array_equal(first.curves, third.curves))

    def test_sampling_sites(self):
        panel = gen_panel(small_config(n_min=4, n_max=5))
        grid = np.linspace(0, 1, 31)
        self.assertTrue(np.all(np.isin(panel.obs.counts, [4, 5])))
        for i in range(panel.cfg.p):
            for j in range(panel.cfg.J):
                times, _ = panel.obs.curve(i, j)
                self.assertEqual(np.unique(times).size, times.size)
                self.assertTrue(np.all(np.isin(times, grid)))

    def test_curves_on_candidate_grid(self):
        panel = gen_panel(small_config(horizon=3))
        self.assertEqual(panel.curves.shape, (3, 15, 31))
        self.assertEqual(panel.obs.J, 15)
        np.testing.assert_allclose(panel.curves_on(panel.grid), panel.curves, atol=1e-12)

    def test_heavy_tailed_case_runs(self):
        panel = gen_panel(small_config(case=2))
        self.assertTrue(np.all(np.isfinite(panel.obs.values)))

    def test_invalid_configurations(self):
        for changes in ({'n_min': 6, 'n_max': 5}, {'rho': 1.0}, {'case': 4}, {'kappa': 4.0}):
            with self.subTest(changes=changes):
                with self.assertRaises(ArgumentError):
                    small_config(**changes).validate()


class NoiseDrawTests(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        large = dict(J=500, n_min=10, n_max=15, calibration_curves=2000, burn_in=200)
        cls.gaussian = gen_panel(small_config(**large))
        cls.heavy = gen_panel(small_config(case=2, **large))

    def test_noise_to_signal_ratio(self):
        energy = TimeGrid(self.gaussian.grid).norm_sq(self.gaussian.curves).mean(axis=1)
        for i, draws in enumerate(noise_draws(self.gaussian)):
            with self.subTest(subject=i):
                self.assertAlmostEqual(float(np.var(draws)) / energy[i], 0.1, delta=0.02)

    def test_heavy_tails_keep_the_variance(self):
        np.testing.assert_array_equal(self.heavy.curves, self.gaussian.curves)
        for i, (light, heavy) in enumerate(zip(noise_draws(self.gaussian), noise_draws(self.heavy))):
            with self.subTest(subject=i):
                self.assertAlmostEqual(float(np.var(heavy) / np.var(light)), 1.0, delta=0.15)
                self.assertLess(abs(stats.kurtosis(light)), 0.3)
                self.assertGreater(stats.kurtosis(heavy), 1.5)


class PopulationSpectrumTests(SimpleTestCase):
    def test_fields_are_hermitian_and_reflected(self):
        cfg = small_config()
        panel = gen_panel(cfg)
        fields = population_spectral_fields(cfg, panel.precisions, TimeGrid.uniform(9), FrequencyGrid(16, 1))
        self.assertEqual(len(fields), 3)
        for field in fields:
            field.check_invariants()

    def test_lag_zero_matches_score_variance(self):
        """
        Integrating the field over ω gives Var(ξ) Σ_l w_l² φ_l φ_lᵀ for
        a single component with unit innovation variance.
        """
        cfg = small_config(p=1, kappa=0.0, L=0)
        spec = PrecisionSpec(np.eye(1), ())
        tgrid = TimeGrid.uniform(9)
        field = population_spectral_fields(cfg, [spec], tgrid, FrequencyGrid(256, 1))[0]
        phi = TrueFilters(1, (0,)).on(tgrid.points)[0][0, 0]
        expected = np.outer(phi, phi) / (1 - 0.5 ** 2)
        np.testing.assert_allclose(field.inverse_transform(0).real, expected, atol=1e-8)

    def test_nonlinear_case_has_no_closed_form(self):
        cfg = small_config(case=3)
        with self.assertRaises(ArgumentError):
            population_spectral_fields(cfg, [PrecisionSpec(np.eye(3), ())], TimeGrid.uniform(5), FrequencyGrid(8, 1))
