"""Lag-window spectral densities, their marginal and per-frequency eigensystems.

Kernels are computed on the nonnegative half of the frequency grid and
mirrored by conjugation, which is exact for real autocovariances.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .core import HERMITIAN_TOL, ComplexKernel, map_ordered
from .exceptions import ArgumentError, DegenerateSpectrumError, DimensionError, InvariantViolation

logger = logging.getLogger(__name__)

MARGINAL = 'marginal'
SCORE_SPECTRUM_FLOOR = 1e-8


def select_h_max(J, mean_count):
    """floor((J·N̄)^{1/4}) clamped to [1, J − 1]."""
    if J < 2:
        return 1
    if mean_count <= 0:
        raise ArgumentError(f'mean observation count must be positive, got {mean_count}')
    h = math.floor((J * mean_count) ** 0.25 + 1e-12)
    return int(min(max(h, 1), J - 1))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex kernels f(·, ·|ω) for every point of a frequency grid."""

    tgrid: object
    fgrid: object
    values: np.ndarray  # (M_ω, M_t, M_t) complex
    scope: object = MARGINAL

    def __post_init__(self):
        shape = (len(self.fgrid), len(self.tgrid), len(self.tgrid))
        if self.values.shape != shape:
            raise DimensionError(f'spectral field of shape {self.values.shape}, expected {shape}')

    def kernel(self, index):
        return ComplexKernel(self.values[index], self.tgrid)

    @property
    def scale(self):
        return max(float(np.max(np.abs(self.values))), 1e-300)

    def hermitian_defect(self):
        return float(np.max(np.abs(self.values - np.conj(np.transpose(self.values, (0, 2, 1))))))

    def reflection_defect(self):
        return float(np.max(np.abs(self.values[self.fgrid.mirror] - np.conj(self.values))))

    def check_invariants(self, tol=HERMITIAN_TOL):
        if self.hermitian_defect() > tol * self.scale:
            raise InvariantViolation(f'spectral field ({self.scope}) is not Hermitian')
        if self.reflection_defect() > tol * self.scale:
            raise InvariantViolation(f'spectral field ({self.scope}) violates f(−ω) = conj f(ω)')

    def inverse_transform(self, h):
        """∫ f(t, s|ω) e^{−ihω} dω by the frequency-grid trapezoid."""
        phase = self.fgrid.weights * np.exp(-1j * h * self.fgrid.points)
        return np.tensordot(phase, self.values, axes=(0, 0))

    def same_grids(self, other):
        return self.tgrid.same_as(other.tgrid) and self.fgrid.same_as(other.fgrid)


def bartlett_weights(h_max):
    return 1 - np.arange(h_max) / h_max


def bartlett_spectral(autocov, h_max, fgrid, subject=0):
    """(1/2π) Σ_{|h|≤h_max} (1 − |h|/h_max) Ĉ_iih e^{ihω} for one subject.

    ``autocov`` is an AutocovField; lags ±h_max carry zero weight.
    """
    if h_max < 1:
        raise ArgumentError(f'h_max must be at least 1, got {h_max}')
    if autocov.lags < h_max:
        raise ArgumentError(
            f'Bartlett window with h_max={h_max} needs lags 0..{h_max - 1}, '
            f'only {autocov.lags} estimated'
        )
    weights = bartlett_weights(h_max)
    omegas = fgrid.points[fgrid.half_indices]
    c0 = autocov.lag(subject, 0)
    half = np.repeat(((c0 + c0.T) / 2)[None, :, :].astype(complex), omegas.size, axis=0)
    for h in range(1, h_max):
        c_h = autocov.lag(subject, h)
        phase = np.exp(1j * h * omegas)[:, None, None]
        half += weights[h] * (c_h[None, :, :] * phase + c_h.T[None, :, :] * np.conj(phase))
    half /= 2 * np.pi
    values = fgrid.mirror_half(half)
    return SpectralField(autocov.grid, fgrid, values, scope=subject)


def subject_spectral_fields(autocov, h_max, fgrid):
    return [bartlett_spectral(autocov, h_max, fgrid, subject=i) for i in range(autocov.surfaces.shape[0])]


def marginal_spectral(fields):
    """Plug-in marginal (1/p) Σ_i f̂_ii."""
    if not fields:
        raise ArgumentError('no subject spectral fields to marginalise')
    first = fields[0]
    for other in fields[1:]:
        if not first.same_grids(other):
            raise DimensionError('subject spectral fields live on different grids')
    values = np.mean(np.stack([f.values for f in fields]), axis=0)
    return SpectralField(first.tgrid, first.fgrid, values, scope=MARGINAL)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Leading eigenpairs of a spectral field at every frequency.

    Eigenfunctions have unit quadrature norm; their phase within each
    frequency is arbitrary until the filters resolve it.
    """

    tgrid: object
    fgrid: object
    eigenvalues: np.ndarray  # (M_ω, K_max), descending, clipped at 0
    eigenfunctions: np.ndarray  # (M_ω, K_max, M_t) complex
    min_eigenvalue: np.ndarray  # (M_ω,) before clipping
    max_eigenvalue: np.ndarray  # (M_ω,)

    @property
    def K_max(self):
        return self.eigenvalues.shape[1]

    def integrated_eigenvalues(self):
        """∫ η_k(ω) dω per k by the frequency-grid trapezoid."""
        return self.fgrid.weights @ self.eigenvalues

    def with_eigenfunctions(self, eigenfunctions):
        return EigenSystem(
            self.tgrid, self.fgrid, self.eigenvalues, eigenfunctions,
            self.min_eigenvalue, self.max_eigenvalue,
        )


def _decompose(matrix, sqrt_w, K_max, real):
    weighted = sqrt_w[:, None] * matrix * sqrt_w[None, :]
    if real:
        values, vectors = linalg.eigh(weighted.real)
    else:
        values, vectors = linalg.eigh((weighted + weighted.conj().T) / 2)
    values = values[::-1]
    vectors = vectors[:, ::-1]
    functions = (vectors[:, :K_max] / sqrt_w[:, None]).T
    return values[:K_max], functions.astype(complex), values[-1], values[0]


def eigendecompose_per_frequency(field, K_max, workers=None, tol=HERMITIAN_TOL):
    """Hermitian eigendecomposition of D^{1/2} F(ω) D^{1/2} at each ω.

    Self-conjugate frequencies (0, ±π) are decomposed as real symmetric
    matrices so their eigenfunctions are real.
    """
    if field.hermitian_defect() > tol * field.scale:
        raise InvariantViolation('cannot eigendecompose a non-Hermitian spectral field')
    K_max = int(min(K_max, len(field.tgrid)))
    fgrid = field.fgrid
    sqrt_w = np.sqrt(field.tgrid.weights)
    half = fgrid.half_indices

    def one(index):
        return _decompose(field.values[index], sqrt_w, K_max, fgrid.is_self_conjugate(index))

    results = map_ordered(one, half, workers)
    eigenvalues = np.array([r[0] for r in results])
    functions = np.array([r[1] for r in results])
    lowest = np.array([r[2] for r in results])
    highest = np.array([r[3] for r in results])
    if np.any(lowest < -1e-10 * max(float(highest.max()), 1e-300)):
        logger.debug('negative eigenvalues down to %.3e clipped at zero', float(lowest.min()))
    return EigenSystem(
        field.tgrid,
        fgrid,
        fgrid.mirror_half(np.clip(eigenvalues, 0.0, None), conjugate=False),
        fgrid.mirror_half(functions),
        fgrid.mirror_half(lowest, conjugate=False),
        fgrid.mirror_half(highest, conjugate=False),
    )


def variance_ratio_select(integrated, K_max=None):
    """argmax_k ∫η_k / ∫η_{k+1} over k = 1..K_max − 1 (ties to smaller k)."""
    integrated = np.asarray(integrated, dtype=float)
    K_max = integrated.size if K_max is None else min(K_max, integrated.size)
    if K_max < 2:
        raise ArgumentError('selecting K needs at least two eigenvalues')
    integrated = integrated[:K_max]
    if np.all(integrated < 1e-12):
        raise DegenerateSpectrumError('all integrated eigenvalues are below 1e-12')
    numer = integrated[:-1]
    denom = integrated[1:]
    with np.errstate(divide='ignore', invalid='ignore'):
        ratios = np.where(denom > 0, numer / np.where(denom > 0, denom, 1), np.where(numer > 0, np.inf, 0.0))
    return int(np.argmax(ratios)) + 1


def select_K(eigsys, K_max):
    K = variance_ratio_select(eigsys.integrated_eigenvalues(), K_max)
    logger.info('variance ratio criterion selects K=%d', K)
    return K


@dataclass(frozen=True, eq=False)
class ScoreSpectralDensity:
    """η̃_ik(ω) on the full frequency grid (p × K × M_ω)."""

    fgrid: object
    values: np.ndarray

    @property
    def p(self):
        return self.values.shape[0]

    @property
    def K(self):
        return self.values.shape[1]

    def at(self, omegas):
        """Periodic linear interpolation in ω; exact on grid points."""
        omegas = np.angle(np.exp(1j * np.asarray(omegas, dtype=float)))
        points = self.fgrid.points
        flat = self.values.reshape(-1, len(points))
        out = np.stack([np.interp(omegas, points, row) for row in flat])
        return out.reshape(self.values.shape[:2] + omegas.shape)

    def whittle(self, J):
        """Values at 2πj/J, j = 1..J."""
        if self.fgrid.n % J == 0:
            return self.values[:, :, self.fgrid.whittle_indices(J)]
        return self.at(2 * np.pi * np.arange(1, J + 1) / J)

    def subject(self, i):
        return ScoreSpectralDensity(self.fgrid, self.values[i:i + 1])


def score_spectral_density(eigsys, subject_fields, K=None):
    """η̃_ik(ω) = ∫∫ conj(ψ_k(t|ω)) f_ii(t, s|ω) ψ_k(s|ω) dt ds.

    Invariant to the phase of ψ_k; tiny imaginary parts are dropped and
    values are floored at 1e-8 × the overall maximum.
    """
    K = eigsys.K_max if K is None else K
    w = eigsys.tgrid.weights
    psi = eigsys.eigenfunctions[:, :K, :] * w  # (M_ω, K, M_t)
    values = np.empty((len(subject_fields), K, len(eigsys.fgrid)), dtype=complex)
    for i, field in enumerate(subject_fields):
        applied = np.einsum('wab,wkb->wka', field.values, psi)
        values[i] = np.einsum('wka,wka->kw', np.conj(psi), applied)
    scale = max(float(np.max(np.abs(values))), 1e-300)
    if float(np.max(np.abs(values.imag))) > 1e-10 * max(scale, 1.0):
        logger.warning('score spectral density has imaginary part %.3e; discarded', float(np.max(np.abs(values.imag))))
    real = values.real
    floor = SCORE_SPECTRUM_FLOOR * max(float(real.max()), 1e-300)
    return ScoreSpectralDensity(eigsys.fgrid, np.maximum(real, floor))
