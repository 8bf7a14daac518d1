"""End-to-end estimation of marginal filters and scores, and the two methods.

``spectral_mpca`` shares one marginal spectral density across subjects;
``individual_spectral`` runs the same steps on each subject alone.
"""
import logging
from dataclasses import dataclass, replace

import numpy as np

from . import filters, scores, smoothing, spectral, tasks
from .conf import AUTO, RunConfig, config_hash
from .core import build_uniform_grids, map_ordered, validate_observations
from .exceptions import ArgumentError, InsufficientDataError, ObservationError

logger = logging.getLogger(__name__)


def _option(value):
    return None if value == AUTO else value


def fit_model(obs, config=None, K=None, store_spectrum=False, workers=None, method='spectral_mpca'):
    """Estimate means, filters, noise, score spectra and MAP scores."""
    config = config or RunConfig()
    grids, smooth, select, solver = config.grids, config.smoothing, config.selection, config.solver
    workers = workers or config.workers
    bandwidth = smooth.get('bandwidth', AUTO)
    kernel = smooth.get('kernel', 'epanechnikov')

    if len(obs) == 0:
        raise InsufficientDataError('the panel has no observations')
    report = validate_observations(obs)
    if not report.ok:
        raise ObservationError(report.issues[0].message)
    tgrid, fgrid = build_uniform_grids(grids.get('M_t', 51), grids.get('M_omega', 128), obs.J)

    means = smoothing.estimate_means(obs, tgrid, bandwidth, kernel, workers)
    h_max = _option(select.get('h_max', AUTO)) or spectral.select_h_max(obs.J, obs.mean_count)
    if h_max > obs.J:
        raise ArgumentError(f'h_max={h_max} needs lags beyond J − 1 = {obs.J - 1}')
    logger.info('h_max=%d (J=%d, mean count %.2f)', h_max, obs.J, obs.mean_count)
    autocov = smoothing.estimate_autocov_field(obs, means, h_max, tgrid, bandwidth, kernel, workers)
    noise = smoothing.estimate_noise_variances(obs, means, bandwidth, kernel)

    fields = spectral.subject_spectral_fields(autocov, h_max, fgrid)
    for field in fields:
        field.check_invariants()
    marginal = spectral.marginal_spectral(fields)
    K_max = select.get('K_max', 5)
    eigsys = spectral.eigendecompose_per_frequency(marginal, max(K_max, K or 0), workers)
    if K is None:
        K = _option(select.get('K', AUTO)) or spectral.select_K(eigsys, K_max)

    bank = filters.estimate_filters(
        eigsys, K, select.get('L_max', 5), select.get('epsilon', 0.1),
        solver.get('phase_tol', 1e-8), solver.get('phase_max_iter', 500), workers,
    )
    spectra = spectral.score_spectral_density(eigsys, fields, K)
    design, y, weights = scores.build_design(obs, bank, means, noise)
    precision = scores.build_whittle_precision(spectra, obs.J, bank.L)
    xi = scores.map_scores(
        design, y, weights, precision,
        solver.get('rtol', 1e-8), solver.get('max_iter_factor', 10),
    )
    logger.info('fitted K=%d, L=%s', K, bank.L)
    diagnostics = {
        'min_eigenvalue': eigsys.min_eigenvalue,
        'max_eigenvalue': eigsys.max_eigenvalue,
        'integrated_eigenvalues': eigsys.integrated_eigenvalues(),
        'filter_norms': bank.total_norms(),
        'phase_objective': np.array([nu.objective for nu in bank.phases]),
    }
    return tasks.FittedModel(
        tgrid, fgrid, means, bank, noise, spectra, xi, h_max,
        config_hash=config_hash(config), method=method, diagnostics=diagnostics,
        marginal=marginal if store_spectrum else None,
    )


@dataclass(frozen=True, eq=False)
class IndividualModel:
    """One single-subject model per subject."""

    models: list
    method: str = 'individual_spectral'

    @property
    def p(self):
        return len(self.models)

    @property
    def J(self):
        return self.models[0].J

    @property
    def tgrid(self):
        return self.models[0].tgrid


def fit_individual(obs, config=None, K=None, workers=None):
    models = [
        fit_model(obs.subject(i), config, K=K, workers=workers, method='individual_spectral')
        for i in range(obs.p)
    ]
    return IndividualModel(models)


METHODS = {
    'spectral_mpca': fit_model,
    'individual_spectral': fit_individual,
}


def fit_method(name, obs, config=None, K=None, workers=None):
    try:
        method = METHODS[name]
    except KeyError:
        raise ArgumentError(f'unknown method {name!r}; choose from {", ".join(sorted(METHODS))}')
    return method(obs, config, K=K, workers=workers)


def _members(fit):
    return fit.models if isinstance(fit, IndividualModel) else [fit]


def impute_curves(fit):
    """(p, J, M_t) reconstructions for either method."""
    return np.concatenate([tasks.impute(model) for model in _members(fit)], axis=0)


def forecast_curves(fit, horizon, P_max=None):
    """(p, horizon, M_t) forecasts past the last fitted curve."""
    out = []
    for model in _members(fit):
        var_fits = tasks.fit_score_vars(model, P_max)
        out.append(tasks.forecast(model, var_fits, horizon))
    return np.concatenate(out, axis=0)


def refit_scores(fit, obs, config=None):
    """MAP scores for ``obs`` with means, filters, noise and score spectra frozen."""
    if isinstance(fit, IndividualModel):
        return IndividualModel([refit_scores(m, obs.subject(i), config) for i, m in enumerate(fit.models)])
    solver = (config or RunConfig()).solver
    design, y, weights = scores.build_design(obs, fit.bank, fit.means, fit.noise_variances)
    precision = scores.build_whittle_precision(fit.spectra, obs.J, fit.bank.L)
    xi = scores.map_scores(
        design, y, weights, precision,
        solver.get('rtol', 1e-8), solver.get('max_iter_factor', 10),
    )
    return replace(fit, scores=xi)


def one_step_forecasts(obs, method, J, P, config=None, K=None, refit=None, workers=None):
    """Rolling protocol: fit on curves 1..J+m−1, forecast curve J+m, m = 1..P.

    Returns (p, P, M_t). With ``refit='scores_only'`` the model fitted on
    the first J curves is reused and only its scores are refitted.
    """
    config = config or RunConfig()
    refit = refit or config.nmspe.get('refit', 'full')
    if P < 1:
        raise ArgumentError(f'forecast horizon must be at least 1, got {P}')
    if J + P - 1 > obs.J:
        raise ArgumentError(f'the protocol needs {J + P - 1} curves, the panel has {obs.J}')
    P_max = _option(config.forecast.get('P_max', AUTO))
    base = fit_method(method, obs.head(J), config, K=K, workers=workers)

    def step(m):
        if m == 1:
            fit = base
        elif refit == 'scores_only':
            fit = refit_scores(base, obs.head(J + m - 1), config)
        else:
            fit = fit_method(method, obs.head(J + m - 1), config, K=K, workers=1)
        return forecast_curves(fit, 1, P_max)[:, 0, :]

    steps = map_ordered(step, range(1, P + 1), workers)
    return np.stack(steps, axis=1)
