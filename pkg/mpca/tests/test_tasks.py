import numpy as np
from django.test import SimpleTestCase

from ..core import FrequencyGrid, ObservationSet, TimeGrid
from ..exceptions import ArgumentError, UndefinedMetricError
from ..filters import FilterBank, estimate_filters
from ..scores import ScoreArray
from ..smoothing import MeanFunctions
from ..spectral import SpectralField, eigendecompose_per_frequency
from ..tasks import (
    FittedModel, VarFit, fit_var, forecast, frequency_response, impute, nmse,
    nmse_observed, nmspe, reconstruction_mse,
)


def create_model(tgrid: TimeGrid, filters: list, series: list, J: int, mean: float = 1.0) -> FittedModel:
    """
    Create a fitted model with constant means `mean`, the given filter
    blocks and score series (row r holds curve r − L_k).
    """
    bank = FilterBank(tgrid, filters)
    p = series[0].shape[1]
    means = MeanFunctions(tgrid, np.full((p, len(tgrid)), mean))
    scores = ScoreArray.from_series(series, J, bank.L)
    return FittedModel(tgrid, None, means, bank, np.ones(p), None, scores, h_max=1)


def orthonormal_functions(tgrid: TimeGrid, count: int) -> np.ndarray:
    """
    Gram-Schmidt on 1, t, t², … under the trapezoid inner product.
    """
    out = []
    for power in range(count):
        f = tgrid.points ** power
        for g in out:
            f = f - np.sum(tgrid.weights * g * f) * g
        out.append(f / np.sqrt(tgrid.norm_sq(f)))
    return np.array(out)


class ImputeTests(SimpleTestCase):
    def setUp(self):
        self.tgrid = TimeGrid.uniform(7)
        self.phi = np.sin(np.pi * self.tgrid.points)

    def test_zero_scores_give_means(self):
        model = create_model(self.tgrid, [self.phi[None, :]], [np.zeros((4, 2))], J=4, mean=2.0)
        np.testing.assert_array_equal(impute(model), np.full((2, 4, 7), 2.0))

    def test_single_basis(self):
        model = create_model(self.tgrid, [self.phi[None, :]], [np.ones((3, 1))], J=3)
        curves = impute(model)
        self.assertEqual(curves.shape, (1, 3, 7))
        np.testing.assert_allclose(curves[0, 1], 1.0 + self.phi)

    def test_lagged_filters_combine_neighbouring_scores(self):
        filters = np.vstack([np.zeros(7), np.zeros(7), self.phi])
        series = np.arange(5.0)[:, None]
        model = create_model(self.tgrid, [filters], [series], J=3, mean=0.0)
        np.testing.assert_allclose(impute(model)[0, 0], 2.0 * self.phi)


class VarTests(SimpleTestCase):
    def simulate(self, seed, T=500, rho=0.5, p=2):
        rng = np.random.default_rng(seed)
        out = np.zeros((T + 100, p))
        for t in range(1, T + 100):
            out[t] = rho * out[t - 1] + rng.normal(size=p)
        return out[100:]

    def test_ar1_coefficients(self):
        fit = fit_var(self.simulate(0), P_max=1)
        self.assertEqual(fit.order, 1)
        np.testing.assert_allclose(fit.coefficients[0], 0.5 * np.eye(2), atol=0.15)
        self.assertLess(fit.spectral_radius, 1.0)

    def test_aic_prefers_first_order(self):
        orders = [fit_var(self.simulate(seed), P_max=3).order for seed in range(20)]
        self.assertGreaterEqual(orders.count(1), 12)

    def test_white_noise_has_small_coefficients(self):
        fit = fit_var(self.simulate(1, rho=0.0), P_max=1)
        self.assertLess(float(np.max(np.abs(fit.coefficients))), 0.15)

    def test_constant_series_is_ridged(self):
        with self.assertLogs('mpca.tasks', 'WARNING'):
            fit = fit_var(np.ones((40, 2)))
        self.assertTrue(fit.ridged)
        self.assertTrue(np.all(np.isfinite(fit.coefficients)))

    def test_too_short(self):
        with self.assertRaises(ArgumentError):
            fit_var(np.ones((3, 2)), P_max=1)


class ForecastTests(SimpleTestCase):
    def setUp(self):
        self.tgrid = TimeGrid.uniform(7)
        self.phi = np.cos(self.tgrid.points)

    def scalar_fit(self, coefficient):
        return VarFit(1, np.array([[[coefficient]]]), np.ones((1, 1)), {1: 0.0}, abs(coefficient))

    def test_ar1_forecast_decays(self):
        series = np.array([[0.3], [-1.0], [2.0]])
        model = create_model(self.tgrid, [self.phi[None, :]], [series], J=3)
        curves = forecast(model, [self.scalar_fit(0.5)], 4)
        self.assertEqual(curves.shape, (1, 4, 7))
        for m in range(1, 5):
            np.testing.assert_allclose(curves[0, m - 1], 1.0 + 0.5 ** m * 2.0 * self.phi, atol=1e-10)

    def test_zero_coefficients_give_means(self):
        model = create_model(self.tgrid, [self.phi[None, :]], [np.ones((3, 2))], J=3)
        fit = VarFit(1, np.zeros((1, 2, 2)), np.eye(2), {1: 0.0}, 0.0)
        np.testing.assert_allclose(forecast(model, [fit], 3), 1.0)

    def test_long_horizon_reverts_to_mean(self):
        model = create_model(self.tgrid, [self.phi[None, :]], [np.full((3, 1), 5.0)], J=3)
        curves = forecast(model, [self.scalar_fit(0.9)], 50)
        np.testing.assert_allclose(curves[0, -1], 1.0, atol=0.05)

    def test_lagged_filters_use_forecast_scores(self):
        """
        With L = 1 the first forecast curve reads the score predicted one
        step past the stored series.
        """
        filters = np.vstack([np.zeros(7), np.zeros(7), self.phi])
        series = np.array([[0.0], [0.0], [0.0], [0.0], [1.0]])
        model = create_model(self.tgrid, [filters], [series], J=3, mean=0.0)
        curves = forecast(model, [self.scalar_fit(0.5)], 1)
        np.testing.assert_allclose(curves[0, 0], 0.5 * self.phi, atol=1e-12)

    def test_explosive_fit_still_forecasts(self):
        model = create_model(self.tgrid, [self.phi[None, :]], [np.ones((3, 1))], J=3)
        with self.assertLogs('mpca.tasks', 'WARNING'):
            curves = forecast(model, [self.scalar_fit(1.5)], 2)
        np.testing.assert_allclose(curves[0, 1], 1.0 + 2.25 * self.phi)

    def test_horizon_must_be_positive(self):
        model = create_model(self.tgrid, [self.phi[None, :]], [np.ones((3, 1))], J=3)
        with self.assertRaises(ArgumentError):
            forecast(model, [self.scalar_fit(0.5)], 0)


class MetricTests(SimpleTestCase):
    def setUp(self):
        self.tgrid = TimeGrid.uniform(201)
        self.truth = np.tile(self.tgrid.points, (2, 3, 1))

    def test_perfect_and_null_estimates(self):
        self.assertEqual(nmse(self.truth, self.truth, self.tgrid), 0.0)
        self.assertAlmostEqual(nmse(self.truth, np.zeros_like(self.truth), self.tgrid), 1.0)
        self.assertAlmostEqual(nmspe(self.truth, np.zeros_like(self.truth), self.tgrid), 1.0)

    def test_half_estimate(self):
        self.assertAlmostEqual(nmse(self.truth, self.truth / 2, self.tgrid), 0.25, delta=1e-6)

    def test_zero_truth(self):
        with self.assertRaises(UndefinedMetricError):
            nmse(np.zeros((1, 1, 201)), np.ones((1, 1, 201)), self.tgrid)

    def test_scale_invariance(self):
        estimate = self.truth + 0.1 * np.sin(5 * self.tgrid.points)
        self.assertAlmostEqual(
            nmse(3.0 * self.truth, 3.0 * estimate, self.tgrid),
            nmse(self.truth, estimate, self.tgrid),
            delta=1e-10,
        )

    def test_observed_variant(self):
        grid = TimeGrid.uniform(5)
        heldout = ObservationSet.from_curves({(0, 0): ([0.25, 0.75], [1.0, 3.0])})
        means = MeanFunctions(grid, np.full((1, 5), 2.0))
        self.assertEqual(nmse_observed(heldout, np.full((1, 1, 5), 2.0), grid, means), 1.0)
        self.assertEqual(nmse_observed(heldout, grid.points[None, None, :] * 4, grid, means), 0.0)


class OptimalReconstructionTests(SimpleTestCase):
    def setUp(self):
        self.tgrid = TimeGrid.uniform(11)
        self.fgrid = FrequencyGrid(32, 1)
        u = orthonormal_functions(self.tgrid, 3)
        omegas = self.fgrid.points
        v = (u[0][None, :] + 0.5 * np.exp(1j * omegas)[:, None] * u[1][None, :]) / np.sqrt(1.25)
        lead = (2 + np.cos(omegas))[:, None, None] * v[:, :, None] * np.conj(v)[:, None, :]
        values = lead + 0.05 * np.outer(u[2], u[2])[None, :, :]
        self.field = SpectralField(self.tgrid, self.fgrid, values)

    def test_frequency_response_of_lagged_bank(self):
        filters = np.vstack([np.ones(11), 2 * np.ones(11), np.zeros(11)])
        bank = FilterBank(self.tgrid, [filters])
        response = frequency_response(bank, np.array([0.0, np.pi / 2]))
        np.testing.assert_allclose(response[0, 0], 3.0)
        np.testing.assert_allclose(response[1, 0], 2.0 + 1j)

    def test_estimated_filters_beat_random_banks(self):
        """
        Extracting with the estimated filters loses no more than any other
        bank with the same number of components and lags.
        """
        eigsys = eigendecompose_per_frequency(self.field, 3)
        bank = estimate_filters(eigsys, 1, L_max=3)
        estimated = reconstruction_mse(bank, [self.field])
        tail = float(self.fgrid.weights @ eigsys.eigenvalues[:, 1:].sum(axis=1))
        self.assertGreaterEqual(estimated, tail - 1e-8)
        rng = np.random.default_rng(0)
        for _ in range(50):
            random_bank = FilterBank(self.tgrid, [rng.normal(size=bank.filters[0].shape)])
            self.assertLessEqual(estimated, reconstruction_mse(random_bank, [self.field]) + 1e-10)
