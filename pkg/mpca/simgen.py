"""Synthetic multivariate functional time series with known dynamic structure.

Curves are lagged filter convolutions of VAR(1) score paths whose
innovations have a sparse graphical precision; observations are sparse
noisy samples of the curves on a 31-point candidate grid.
"""
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import linalg

from .core import ObservationSet, TimeGrid
from .exceptions import ArgumentError, GenerationError
from .spectral import SpectralField

logger = logging.getLogger(__name__)

CASES = (1, 2, 3)
MAX_PRECISION_ATTEMPTS = 100


@dataclass(frozen=True)
class SimConfig:
    case: int = 1
    p: int = 5
    J: int = 60
    K: int = 1
    L: int = 1
    rho: float = 0.5
    n_min: int = 5
    n_max: int = 10
    grid_size: int = 31
    noise_ratio: float = 0.1
    kappa: float = 3.0
    r1: float = 0.1
    r2: float = 0.35
    t_df: float = 5.0
    horizon: int = 0
    burn_in: int = 200
    calibration_curves: int = 2000
    seed: int = 0

    def validate(self):
        if self.case not in CASES:
            raise ArgumentError(f'case must be one of {CASES}, got {self.case}')
        if self.p < 1 or self.J < 2 or self.K < 1 or self.L < 0:
            raise ArgumentError('simulation needs p >= 1, J >= 2, K >= 1 and L >= 0')
        if not 1 <= self.n_min <= self.n_max <= self.grid_size:
            raise ArgumentError(
                f'observation range {{{self.n_min}..{self.n_max}}} must lie in 1..{self.grid_size}'
            )
        if self.case in (1, 2) and not -1 < self.rho < 1:
            raise ArgumentError(f'rho must lie in (-1, 1) for linear dynamics, got {self.rho}')
        if not 0 <= self.kappa <= self.p:
            raise ArgumentError(f'edge probability kappa/p must lie in [0, 1], got {self.kappa}/{self.p}')
        if not 0 < self.r1 < self.r2:
            raise ArgumentError(f'need 0 < r1 < r2, got [{self.r1}, {self.r2}]')
        if self.case == 2 and self.t_df <= 2:
            raise ArgumentError(f't noise needs more than 2 degrees of freedom, got {self.t_df}')
        if self.noise_ratio < 0 or self.horizon < 0 or self.burn_in < 0 or self.calibration_curves < 1:
            raise ArgumentError('noise_ratio, horizon and burn_in must be nonnegative')
        return self

    @property
    def nrange(self):
        return f'{self.n_min}-{self.n_max}'

    def as_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class PrecisionSpec:
    """Innovation precision Θ_k^b for one component, with its edge set."""

    theta: np.ndarray
    edges: tuple
    attempts: int = 1

    @property
    def covariance(self):
        return linalg.inv(self.theta)

    @property
    def cholesky(self):
        return linalg.cholesky(self.theta, lower=True)


def gen_precision(p, k, kappa, r1, r2, rng):
    """Θ with diagonal e^{k/10}/5 and off-diagonal R e^{k/10}/5 on random edges.

    ``k`` is 1-based. Edges are redrawn until Θ is positive definite.
    """
    if not 0 <= kappa <= p:
        raise ArgumentError(f'edge probability kappa/p must lie in [0, 1], got {kappa}/{p}')
    if not 0 < r1 < r2:
        raise ArgumentError(f'need 0 < r1 < r2, got [{r1}, {r2}]')
    base = math.exp(k / 10) / 5
    pairs = [(a, b) for a in range(p) for b in range(a + 1, p)]
    for attempt in range(1, MAX_PRECISION_ATTEMPTS + 1):
        theta = base * np.eye(p)
        edges = []
        for a, b in pairs:
            if rng.random() < kappa / p:
                strength = rng.uniform(r1, r2) * rng.choice((-1.0, 1.0))
                theta[a, b] = theta[b, a] = strength * base
                edges.append((a, b))
        try:
            linalg.cholesky(theta, lower=True)
        except linalg.LinAlgError:
            continue
        return PrecisionSpec(theta, tuple(edges), attempt)
    raise GenerationError(
        f'no positive definite precision in {MAX_PRECISION_ATTEMPTS} draws '
        f'(p={p}, k={k}, kappa={kappa}, r=[{r1}, {r2}])'
    )


def gen_scores(specs, rho, J, L, case, rng, burn_in=200):
    """Score paths of length J + 2L_k per component, each (J + 2L_k) × p.

    Cases 1 and 2 follow ξ_{j+1} = ρ ξ_j + b_j; case 3 adds sin(ξ_j).
    Paths start at zero and discard ``burn_in`` steps.
    """
    if case not in CASES:
        raise ArgumentError(f'case must be one of {CASES}, got {case}')
    L = [L] * len(specs) if np.isscalar(L) else list(L)
    rho = [rho] * len(specs) if np.isscalar(rho) else list(rho)
    paths = []
    for k, spec in enumerate(specs):
        p = spec.theta.shape[0]
        T = J + 2 * L[k]
        steps = burn_in + T
        chol = spec.cholesky
        z = rng.standard_normal((steps, p))
        innovations = linalg.solve_triangular(chol, z.T, lower=True, trans='T').T
        state = np.zeros(p)
        path = np.empty((steps, p))
        for step in range(steps):
            drift = rho[k] * state
            if case == 3:
                drift = drift + np.sin(state)
            state = drift + innovations[step]
            path[step] = state
        paths.append(path[burn_in:])
    return paths


def filter_weights(L):
    """w_l = sqrt(w'_l / Σ w'), w'_l = e^{−|l|/2}, for l = −L..L."""
    raw = np.exp(-np.abs(np.arange(-L, L + 1)) / 2)
    return np.sqrt(raw / raw.sum())


def fourier_slot(s, times):
    """√2 sin(2π(s//2 + 1)t) for even slots, √2 cos(...) for odd ones."""
    frequency = 2 * np.pi * (s // 2 + 1)
    trig = np.sin if s % 2 == 0 else np.cos
    return np.sqrt(2) * trig(frequency * np.asarray(times, dtype=float))


@dataclass(frozen=True)
class TrueFilters:
    """w_l φ_ikl(t) built from Fourier slots over (k, l) and a subject fluctuation."""

    p: int
    L: tuple

    @property
    def K(self):
        return len(self.L)

    def weights(self, k):
        return filter_weights(self.L[k])

    def on(self, times):
        """List over k of (p, 2L_k + 1, len(times)) arrays."""
        times = np.asarray(times, dtype=float)
        fluctuation = 1 + np.sin(np.outer(np.arange(1, self.p + 1), times) / self.p)
        out = []
        slot = 0
        for k in range(self.K):
            block = np.empty((self.p, 2 * self.L[k] + 1, times.size))
            for index, weight in enumerate(self.weights(k)):
                block[:, index, :] = weight * fourier_slot(slot, times)[None, :] * fluctuation
                slot += 1
            out.append(block)
        return out


def gen_basis(p, K, L, grid):
    """True weighted filters for p subjects sampled on ``grid`` points."""
    L = tuple([L] * K if np.isscalar(L) else L)
    filters = TrueFilters(p, L)
    return filters, filters.on(getattr(grid, 'points', grid))


def reconstruct_curves(filters_on_grid, scores, L, n_curves):
    """ε_ij = Σ_k Σ_l w_l φ_ikl ξ_{i(j+l)k} for j = 0..n_curves−1, (p, n_curves, M)."""
    p, _, M = filters_on_grid[0].shape
    curves = np.zeros((p, n_curves, M))
    j = np.arange(n_curves)
    for k, block in enumerate(filters_on_grid):
        for index, l in enumerate(range(-L[k], L[k] + 1)):
            xi = scores[k][j + l + L[k]]  # (n_curves, p)
            curves += xi.T[:, :, None] * block[:, index, None, :]
    return curves


@dataclass(frozen=True, eq=False)
class TruthPanel:
    cfg: SimConfig
    grid: np.ndarray
    precisions: list
    filters: TrueFilters
    scores: list
    curves: np.ndarray  # (p, J + horizon, grid_size)
    obs: ObservationSet
    curve_energy: np.ndarray  # calibrated E‖ε_i1‖²
    noise_variances: np.ndarray

    @property
    def n_curves(self):
        return self.curves.shape[1]

    def curves_on(self, grid):
        """Latent curves evaluated at any grid from the analytic basis."""
        points = getattr(grid, 'points', grid)
        return reconstruct_curves(self.filters.on(points), self.scores, self.filters.L, self.n_curves)


def _calibrate_energy(cfg, precisions, filters, rng):
    grid = TimeGrid(np.linspace(0, 1, cfg.grid_size))
    paths = gen_scores(precisions, cfg.rho, cfg.calibration_curves, cfg.L, cfg.case, rng, cfg.burn_in)
    curves = reconstruct_curves(filters.on(grid.points), paths, filters.L, cfg.calibration_curves)
    return grid.norm_sq(curves).mean(axis=1)


def gen_panel(cfg):
    """Draw a full synthetic panel with observations for J + horizon curves."""
    cfg.validate()
    streams = [np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(4)]
    precision_rng, score_rng, calibration_rng, sampling_rng = streams
    precisions = [gen_precision(cfg.p, k + 1, cfg.kappa, cfg.r1, cfg.r2, precision_rng) for k in range(cfg.K)]
    n_curves = cfg.J + cfg.horizon
    filters, on_grid = gen_basis(cfg.p, cfg.K, cfg.L, np.linspace(0, 1, cfg.grid_size))
    scores = gen_scores(precisions, cfg.rho, n_curves, cfg.L, cfg.case, score_rng, cfg.burn_in)
    curves = reconstruct_curves(on_grid, scores, filters.L, n_curves)

    energy = _calibrate_energy(cfg, precisions, filters, calibration_rng)
    noise_variances = cfg.noise_ratio * energy
    grid = np.linspace(0, 1, cfg.grid_size)
    rows = [[], [], [], []]
    for i in range(cfg.p):
        for j in range(n_curves):
            count = int(sampling_rng.integers(cfg.n_min, cfg.n_max + 1))
            sites = np.sort(sampling_rng.choice(cfg.grid_size, size=count, replace=False))
            if cfg.case == 2:
                scale = math.sqrt((cfg.t_df - 2) / cfg.t_df * noise_variances[i])
                noise = scale * sampling_rng.standard_t(cfg.t_df, size=count)
            else:
                noise = math.sqrt(noise_variances[i]) * sampling_rng.standard_normal(count)
            rows[0].append(np.full(count, i))
            rows[1].append(np.full(count, j))
            rows[2].append(grid[sites])
            rows[3].append(curves[i, j, sites] + noise)
    obs = ObservationSet(cfg.p, n_curves, *(np.concatenate(r) for r in rows))
    logger.debug(
        'simulated case %d panel: p=%d, %d curves, %d observations',
        cfg.case, cfg.p, n_curves, len(obs),
    )
    return TruthPanel(cfg, grid, precisions, filters, scores, curves, obs, energy, noise_variances)


def population_spectral_fields(cfg, precisions, tgrid, fgrid):
    """Exact f_ii(t, s|ω) of the linear generator on the given grids.

    With AR(1) scores of innovation variance v_ik the score spectrum is
    v_ik / (2π |1 − ρ e^{iω}|²) and f_ii = Σ_k s_ik G_ik G_ik*, where
    G_ik(t|ω) = Σ_l w_l φ_ikl(t) e^{−ilω}.
    """
    if cfg.case == 3:
        raise ArgumentError('the nonlinear score dynamics have no closed-form spectrum')
    filters = TrueFilters(cfg.p, tuple([cfg.L] * cfg.K))
    blocks = filters.on(tgrid.points)
    omegas = fgrid.points
    fields = []
    for i in range(cfg.p):
        values = np.zeros((len(fgrid), len(tgrid), len(tgrid)), dtype=complex)
        for k, block in enumerate(blocks):
            variance = precisions[k].covariance[i, i]
            spectrum = variance / (2 * np.pi * np.abs(1 - cfg.rho * np.exp(1j * omegas)) ** 2)
            lags = np.arange(-cfg.L, cfg.L + 1)
            response = np.exp(-1j * np.outer(omegas, lags)) @ block[i]  # (M_ω, M_t)
            values += spectrum[:, None, None] * response[:, :, None] * response.conj()[:, None, :]
        fields.append(SpectralField(tgrid, fgrid, values, scope=i))
    return fields
