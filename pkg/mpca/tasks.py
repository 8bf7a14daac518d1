"""Imputation, VAR score forecasting and normalised error metrics."""
import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .exceptions import ArgumentError, DimensionError, UndefinedMetricError

logger = logging.getLogger(__name__)

VAR_RIDGE = 1e-8
EXPLOSIVE_RADIUS = 1.2


@dataclass(frozen=True, eq=False)
class FittedModel:
    """Everything the pipeline estimates from one panel."""

    tgrid: object
    fgrid: object
    means: object
    bank: object
    noise_variances: np.ndarray
    spectra: object
    scores: object
    h_max: int
    config_hash: str = ''
    method: str = 'spectral_mpca'
    diagnostics: dict = field(default_factory=dict)
    marginal: Optional[object] = None

    @property
    def p(self):
        return self.scores.p

    @property
    def J(self):
        return self.scores.J

    @property
    def K(self):
        return self.bank.K

    @property
    def L(self):
        return list(self.bank.L)


def _assemble(means, bank, series, L, curves):
    """μ̂_i + Σ_k Σ_l φ_kl ξ_{i(j+l)k} for 0-based curve indices ``curves``.

    ``series[k]`` has row r holding curve r − L_k.
    """
    p = means.values.shape[0]
    curves = np.asarray(curves)
    out = np.repeat(means.values[:, None, :], curves.size, axis=1).astype(float)
    for k in range(bank.K):
        for index, l in enumerate(bank.lags(k)):
            xi = series[k][curves + l + L[k]]  # (n_curves, p)
            out += xi.T[:, :, None] * bank.filters[k][index][None, None, :]
    return out


def impute(model):
    """Reconstructed curves X̂_ij on the model grid, shape (p, J, M_t)."""
    series = [model.scores.series(k) for k in range(model.K)]
    return _assemble(model.means, model.bank, series, model.L, np.arange(model.J))


@dataclass(frozen=True, eq=False)
class VarFit:
    order: int
    coefficients: np.ndarray  # (P, p, p); y_t = Σ_q A_q y_{t−q} + b_t
    sigma: np.ndarray
    aic: dict
    spectral_radius: float
    ridged: bool = False

    @property
    def p(self):
        return self.sigma.shape[0]

    def predict(self, history, steps):
        """Iterate the recursion ``steps`` times past the end of ``history``."""
        history = [np.asarray(row, dtype=float) for row in history]
        out = []
        for _ in range(steps):
            following = np.zeros(self.p)
            for q in range(self.order):
                following += self.coefficients[q] @ history[-1 - q]
            history.append(following)
            out.append(following)
        return np.array(out).reshape(steps, self.p)


def companion_radius(coefficients):
    P, p, _ = coefficients.shape
    companion = np.zeros((P * p, P * p))
    companion[:p, :] = np.hstack(list(coefficients))
    companion[p:, :-p] = np.eye((P - 1) * p)
    return float(np.max(np.abs(np.linalg.eigvals(companion))))


def default_P_max(T, p):
    return int(max(1, min(5, T // (3 * p))))


def _lagged(series, P, start):
    return np.hstack([series[start - q:series.shape[0] - q] for q in range(1, P + 1)])


def fit_var(series, P_max=None):
    """Least-squares VAR(P), P = 1..P_max, order chosen by AIC.

    No intercept (scores are zero mean); all orders are compared on the
    sample that starts after P_max presample values.
    """
    series = np.asarray(series, dtype=float)
    if series.ndim == 1:
        series = series[:, None]
    T, p = series.shape
    P_max = default_P_max(T, p) if P_max is None else int(P_max)
    if P_max < 1:
        raise ArgumentError(f'P_max must be at least 1, got {P_max}')
    while P_max > 1 and T <= p * P_max + 1:
        P_max -= 1
    if T <= p * P_max + 1:
        raise ArgumentError(f'a VAR on {p} series needs more than {p * P_max + 1} time points, got {T}')

    target = series[P_max:]
    n = target.shape[0]
    fits = {}
    for P in range(1, P_max + 1):
        X = _lagged(series, P, P_max)
        gram = X.T @ X
        ridged = np.linalg.matrix_rank(X) < X.shape[1]
        if ridged:
            gram = gram + VAR_RIDGE * max(float(np.trace(gram)) / gram.shape[0], 1.0) * np.eye(gram.shape[0])
            B = np.linalg.solve(gram, X.T @ target)
        else:
            B = np.linalg.lstsq(X, target, rcond=None)[0]
        resid = target - X @ B
        sigma = resid.T @ resid / n
        floor = 1e-10 * max(float(np.trace(sigma)) / p, np.finfo(float).tiny)
        _, logdet = np.linalg.slogdet(sigma + floor * np.eye(p))
        coefficients = B.T.reshape(p, P, p).transpose(1, 0, 2)
        fits[P] = (n * logdet + 2 * p * p * P, coefficients, sigma, ridged)

    aic = {P: float(v[0]) for P, v in fits.items()}
    order = min(aic, key=lambda P: (aic[P], P))
    _, coefficients, sigma, ridged = fits[order]
    if ridged:
        logger.warning('VAR regressors are rank deficient; ridge %.0e applied', VAR_RIDGE)
    radius = companion_radius(coefficients)
    if radius >= 1:
        logger.warning('VAR(%d) companion spectral radius %.3f is not stable', order, radius)
    return VarFit(order, coefficients, sigma, aic, radius, ridged)


def fit_score_vars(model, P_max=None):
    return [fit_var(model.scores.series(k), P_max) for k in range(model.K)]


def forecast(model, var_fits, horizon):
    """X̂_{J+m} for m = 1..horizon, shape (p, horizon, M_t)."""
    if horizon < 1:
        raise ArgumentError(f'forecast horizon must be at least 1, got {horizon}')
    if len(var_fits) != model.K:
        raise DimensionError(f'{len(var_fits)} VAR fits for {model.K} components')
    series = []
    for k, fit in enumerate(var_fits):
        if fit.spectral_radius > EXPLOSIVE_RADIUS:
            logger.warning('component %d VAR is explosive (radius %.3f)', k + 1, fit.spectral_radius)
        observed = model.scores.series(k)
        series.append(np.vstack([observed, fit.predict(observed, horizon)]))
    return _assemble(model.means, model.bank, series, model.L, model.J + np.arange(horizon))


def _normalised_error(truth, estimate, tgrid):
    truth = np.asarray(truth, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    if truth.shape != estimate.shape:
        raise DimensionError(f'truth of shape {truth.shape} against estimate of shape {estimate.shape}')
    denominator = float(np.sum(tgrid.norm_sq(truth)))
    if denominator == 0:
        raise UndefinedMetricError('true curves are identically zero')
    return float(np.sum(tgrid.norm_sq(truth - estimate))) / denominator


def nmse(truth, estimate, tgrid):
    """Σ‖ε − ε̂‖² / Σ‖ε‖² with trapezoid norms."""
    return _normalised_error(truth, estimate, tgrid)


def nmspe(truth, forecasts, tgrid):
    """Same ratio over forecast curves ε_{i(J+m)}, m = 1..P."""
    return _normalised_error(truth, forecasts, tgrid)


def nmse_observed(obs, curves, tgrid, means):
    """Observed-point variant for panels without latent truth.

    Compares held-out observations with curves interpolated at their
    times, normalised by the demeaned observation energy.
    """
    curves = np.asarray(curves, dtype=float)
    numerator = denominator = 0.0
    for i in range(obs.p):
        for j in range(obs.J):
            times, values = obs.curve(i, j)
            if times.size == 0:
                continue
            fitted = tgrid.interpolate(curves[i, j], times)
            numerator += float(np.sum((values - fitted) ** 2))
            denominator += float(np.sum((values - means.at(i, times)) ** 2))
    if denominator == 0:
        raise UndefinedMetricError('held-out observations carry no demeaned energy')
    return numerator / denominator


def frequency_response(bank, omegas):
    """g_k(t|ω) = Σ_l φ_kl(t) e^{−ilω}, shape (len(omegas), K, M_t)."""
    omegas = np.asarray(omegas, dtype=float)
    out = np.zeros((omegas.size, bank.K, len(bank.tgrid)), dtype=complex)
    for k in range(bank.K):
        phase = np.exp(-1j * np.outer(omegas, bank.lags(k)))
        out[:, k, :] = phase @ bank.filters[k]
    return out


def reconstruction_mse(bank, subject_fields):
    """Mean squared error of extracting and reconstructing with ``bank``.

    Averages over subjects ∫ tr[(I − R(ω)) f_ii(ω) (I − R(ω))*] dω with
    R(ω) = Σ_k g_k(ω) g_k(ω)* in L² coordinates.
    """
    fgrid = subject_fields[0].fgrid
    tgrid = subject_fields[0].tgrid
    if not tgrid.same_as(bank.tgrid):
        raise DimensionError('filters and spectral fields live on different time grids')
    sqrt_w = np.sqrt(tgrid.weights)
    g = frequency_response(bank, fgrid.points) * sqrt_w
    identity = np.eye(len(tgrid))
    total = np.zeros(len(fgrid))
    for field_i in subject_fields:
        weighted = sqrt_w[None, :, None] * field_i.values * sqrt_w[None, None, :]
        for index in range(len(fgrid)):
            residual = identity - g[index].T @ g[index].conj()
            total[index] += np.trace(residual @ weighted[index] @ residual.conj().T).real
    return float(fgrid.weights @ total) / len(subject_fields)
