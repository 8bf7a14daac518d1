"""Phase resolution and real functional filters.

Eigenfunctions from the per-frequency decomposition carry an arbitrary
phase at each frequency. A unit-modulus multiplier ν_k(ω), conjugate
symmetric in ω, is chosen to make the eigenfunction path as coherent as
possible; the inverse Fourier transform of ψ_k ν_k then gives real
filters φ_kl.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from .core import HERMITIAN_TOL, map_ordered
from .exceptions import ArgumentError, ConjugateSymmetryError, DimensionError, NumericalError

logger = logging.getLogger(__name__)

PHASE_TOL = 1e-8
PHASE_MAX_ITER = 500
MAX_HALVINGS = 30
IMAG_TOL = 1e-6


def align_signs(eigsys):
    """Flip eigenfunctions so neighbouring nonnegative frequencies overlap positively."""
    fgrid = eigsys.fgrid
    w = eigsys.tgrid.weights
    half = eigsys.eigenfunctions[fgrid.half_indices].copy()
    for a in range(1, half.shape[0]):
        overlap = np.sum(w * np.conj(half[a - 1]) * half[a], axis=-1)
        half[a, overlap.real < 0] *= -1
    return eigsys.with_eigenfunctions(fgrid.mirror_half(half))


@dataclass(frozen=True, eq=False)
class OverlapKernel:
    """Ψ_k(ω_a, ω_b) = ⟨ψ_k(·|ω_a), ψ_k(·|ω_b)⟩ over the frequency grid."""

    fgrid: object
    values: np.ndarray

    def hermitian_defect(self):
        return float(np.max(np.abs(self.values - self.values.conj().T)))


def overlap_kernel(eigsys, k):
    psi = eigsys.eigenfunctions[:, k, :]
    gram = (np.conj(psi) * eigsys.tgrid.weights) @ psi.T
    return OverlapKernel(eigsys.fgrid, (gram + gram.conj().T) / 2)


@dataclass(frozen=True, eq=False)
class PhaseMultiplier:
    fgrid: object
    values: np.ndarray
    objective_trace: list = field(default_factory=list)
    converged: bool = True

    @property
    def objective(self):
        return self.objective_trace[-1]

    @property
    def iterations(self):
        return len(self.objective_trace) - 1


def _quadratic_form(kernel):
    w = kernel.fgrid.weights
    return (w[:, None] * kernel.values * w[None, :]) / (4 * np.pi ** 2)


def phase_objective(kernel, nu):
    """(1/4π²) Σ_ab w_a w_b Ψ(ω_a, ω_b) conj(ν(ω_a)) ν(ω_b)."""
    nu = np.asarray(nu)
    value = np.vdot(nu, _quadratic_form(kernel) @ nu).real
    if not np.isfinite(value):
        raise NumericalError('phase objective is not finite')
    return float(value)


def _project(half_values, self_conjugate, fallback):
    modulus = np.abs(half_values)
    out = np.where(modulus > 0, half_values / np.where(modulus > 0, modulus, 1), fallback)
    for a in np.flatnonzero(self_conjugate):
        real = half_values[a].real
        out[a] = np.sign(real) if real != 0 else fallback[a].real
    return out


def _greedy_chain(kernel):
    fgrid = kernel.fgrid
    half = fgrid.half_indices
    nu = np.ones(half.size, dtype=complex)
    for a in range(1, half.size):
        link = kernel.values[half[a - 1], half[a]]
        nu[a] = nu[a - 1] * np.conj(link) / abs(link) if abs(link) > 0 else nu[a - 1]
    last = nu[-1].real
    nu[-1] = np.sign(last) if last != 0 else 1.0
    return nu


def optimize_phase(kernel, tol=PHASE_TOL, max_iter=PHASE_MAX_ITER):
    """Projected gradient ascent of the phase objective from a greedy chain.

    ν is parametrised on the nonnegative half of the grid and mirrored by
    conjugation; it is ±1 at the self-conjugate frequencies.
    """
    if kernel.hermitian_defect() > HERMITIAN_TOL * max(float(np.max(np.abs(kernel.values))), 1.0):
        raise ArgumentError('overlap kernel is not Hermitian')
    fgrid = kernel.fgrid
    half = fgrid.half_indices
    self_conjugate = np.array([fgrid.is_self_conjugate(a) for a in half])
    quad = _quadratic_form(kernel)

    nu_half = _greedy_chain(kernel)
    nu = fgrid.mirror_half(nu_half)
    current = phase_objective(kernel, nu)
    trace = [current]
    step = 1.0
    converged = False
    for _ in range(max_iter):
        grad_full = quad @ nu
        grad = grad_full[half] + np.conj(grad_full[fgrid.mirror][half])
        scale = float(np.max(np.abs(grad)))
        if scale == 0:
            converged = True
            break
        for _ in range(MAX_HALVINGS):
            candidate_half = _project(nu_half + step * grad / scale, self_conjugate, nu_half)
            candidate = fgrid.mirror_half(candidate_half)
            value = phase_objective(kernel, candidate)
            if value >= current - 1e-12 * max(abs(current), 1.0):
                break
            step /= 2
        else:
            converged = True
            break
        change = abs(value - current) / max(abs(current), 1e-300)
        nu_half, nu, current = candidate_half, candidate, value
        trace.append(current)
        if change < tol:
            converged = True
            break
    if not converged:
        logger.warning('phase optimisation stopped after %d iterations', max_iter)
    return PhaseMultiplier(fgrid, nu, trace, converged)


def build_filters(eigsys, nu, k, L_max):
    """φ_kl(t) = (1/2π) Σ_ω w_ω ψ_k(t|ω) ν_k(ω) e^{ilω} for l = −L_max..L_max.

    The exponent sign pairs with lag surfaces cov(X_{j+h}(t), X_j(s)), so
    that X_j = Σ_l φ_kl ξ_{j+l} reproduces the generating filters.
    """
    if L_max < 0:
        raise ArgumentError(f'L_max must be nonnegative, got {L_max}')
    fgrid = eigsys.fgrid
    values = nu.values if isinstance(nu, PhaseMultiplier) else np.asarray(nu)
    if values.shape != (len(fgrid),):
        raise DimensionError(f'phase multiplier of shape {values.shape} on a grid of {len(fgrid)}')
    lags = np.arange(-L_max, L_max + 1)
    phases = np.exp(1j * np.outer(lags, fgrid.points)) * (fgrid.weights * values)
    filters = phases @ eigsys.eigenfunctions[:, k, :] / (2 * np.pi)
    scale = max(float(np.max(np.abs(filters))), 1e-300)
    residue = float(np.max(np.abs(filters.imag)))
    if residue > IMAG_TOL * max(scale, 1.0):
        raise ConjugateSymmetryError(
            f'filters for component {k + 1} have imaginary residue {residue:.3e}'
        )
    return filters.real


def select_L_k(norms_sq, epsilon=0.1, L_max=None):
    """Smallest L with Σ_{|l|≤L} ‖φ_kl‖² ≥ 1 − ε, else L_max.

    ``norms_sq`` holds squared norms ordered l = −L_max..L_max.
    """
    norms_sq = np.asarray(norms_sq, dtype=float)
    if norms_sq.size % 2 == 0:
        raise DimensionError('squared filter norms must cover l = −L_max..L_max')
    available = norms_sq.size // 2
    L_max = available if L_max is None else min(L_max, available)
    for L in range(L_max + 1):
        if norms_sq[available - L:available + L + 1].sum() >= 1 - epsilon - 1e-12:
            return L
    return L_max


@dataclass(frozen=True, eq=False)
class FilterBank:
    """Real filters φ_kl on a time grid; ``filters[k]`` is (2L_k + 1, M_t), l ascending."""

    tgrid: object
    filters: list
    phases: list = field(default_factory=list)

    def __post_init__(self):
        for k, phi in enumerate(self.filters):
            if phi.ndim != 2 or phi.shape[0] % 2 == 0 or phi.shape[1] != len(self.tgrid):
                raise DimensionError(f'filter block {k} has shape {phi.shape}')

    @property
    def K(self):
        return len(self.filters)

    @property
    def L(self):
        return [phi.shape[0] // 2 for phi in self.filters]

    def lags(self, k):
        L = self.L[k]
        return np.arange(-L, L + 1)

    def phi(self, k, l):
        L = self.L[k]
        if abs(l) > L:
            return np.zeros(len(self.tgrid))
        return self.filters[k][l + L]

    def at(self, k, times):
        """Filters of component k at arbitrary times, (2L_k + 1, len(times))."""
        return self.tgrid.interpolate(self.filters[k], times)

    def norms_sq(self, k):
        return self.tgrid.norm_sq(self.filters[k])

    def total_norms(self):
        return np.array([self.norms_sq(k).sum() for k in range(self.K)])

    def reconstruction_operator(self, k):
        """Σ_l φ_kl ⊗ φ_kl as an M_t × M_t matrix."""
        return self.filters[k].T @ self.filters[k]


def estimate_filters(eigsys, K, L_max=5, epsilon=0.1, tol=PHASE_TOL, max_iter=PHASE_MAX_ITER, workers=None):
    """Align signs, optimise ν_k and truncate φ_kl for k = 1..K."""
    if K > eigsys.K_max:
        raise ArgumentError(f'K={K} exceeds the {eigsys.K_max} computed eigenpairs')
    aligned = align_signs(eigsys)

    def one(k):
        nu = optimize_phase(overlap_kernel(aligned, k), tol=tol, max_iter=max_iter)
        full = build_filters(aligned, nu, k, L_max)
        L_k = select_L_k(aligned.tgrid.norm_sq(full), epsilon, L_max)
        logger.info(
            'component %d: phase objective %.4f after %d iterations, L=%d',
            k + 1, nu.objective, nu.iterations, L_k,
        )
        return full[L_max - L_k:L_max + L_k + 1], nu

    results = map_ordered(one, range(K), workers)
    return FilterBank(aligned.tgrid, [r[0] for r in results], [r[1] for r in results])
