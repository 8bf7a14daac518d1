"""Grids, quadrature, complex kernels and the observation panel.

All integral formulas elsewhere reduce to weighted sums on the grids
defined here. Every type is immutable once built.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .exceptions import ArgumentError, DimensionError, InvariantViolation

logger = logging.getLogger(__name__)

HERMITIAN_TOL = 1e-10


def _frozen(array, dtype=None):
    out = np.array(array, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


def trapezoid_weights(points):
    """Trapezoid quadrature weights for ordered ``points``."""
    points = np.asarray(points, dtype=float)
    if points.size == 1:
        return np.ones(1)
    gaps = np.diff(points)
    weights = np.zeros_like(points)
    weights[:-1] += gaps / 2
    weights[1:] += gaps / 2
    return weights


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Ordered points in [0, 1] with trapezoid weights."""

    points: np.ndarray
    weights: np.ndarray = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        if points.ndim != 1 or points.size < 2:
            raise ArgumentError('a time grid needs at least two points')
        if np.any(np.diff(points) <= 0):
            raise ArgumentError('time grid points must be strictly increasing')
        if points[0] < 0 or points[-1] > 1:
            raise ArgumentError('time grid points must lie in [0, 1]')
        weights = trapezoid_weights(points) if self.weights is None else self.weights
        object.__setattr__(self, 'points', _frozen(points))
        object.__setattr__(self, 'weights', _frozen(weights, float))

    @classmethod
    def uniform(cls, count):
        if count < 2:
            raise ArgumentError(f'M_t must be at least 2, got {count}')
        return cls(np.linspace(0.0, 1.0, count))

    def __len__(self):
        return self.points.size

    def same_as(self, other):
        return len(self) == len(other) and np.array_equal(self.points, other.points)

    def interpolate(self, values, times):
        """Evaluate grid-sampled functions (last axis on the grid) at ``times``."""
        values = np.asarray(values)
        times = np.asarray(times, dtype=float)
        if values.ndim == 1:
            return np.interp(times, self.points, values)
        flat = values.reshape(-1, values.shape[-1])
        out = np.stack([np.interp(times, self.points, row) for row in flat])
        return out.reshape(values.shape[:-1] + times.shape)

    def norm_sq(self, values):
        """Squared L2 norm of grid functions along the last axis."""
        return np.sum(self.weights * np.abs(values) ** 2, axis=-1)


def whittle_frequencies(J):
    """The Whittle set 2πj/J for j = 1..J."""
    return 2 * np.pi * np.arange(1, J + 1) / J


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Uniform grid on [−π, π] of ``n + 1`` points, closed under negation.

    The grid is built from its nonnegative half and mirrored, so the
    negation closure is exact. It holds every point 2πj/J of the
    Whittle set for the ``J`` it was built with.
    """

    n: int
    J: int = 1
    points: np.ndarray = field(init=False)
    weights: np.ndarray = field(init=False)
    symmetric: bool = field(init=False, default=True)

    def __post_init__(self):
        if self.n < 2 or self.n % 2:
            raise ArgumentError(f'frequency grid size must be even and >= 2, got {self.n}')
        if self.n % self.J:
            raise ArgumentError('the Whittle set does not lie on this grid')
        half = 2 * np.pi * np.arange(0, self.n // 2 + 1) / self.n
        points = np.concatenate([-half[:0:-1], half])
        object.__setattr__(self, 'points', _frozen(points))
        object.__setattr__(self, 'weights', _frozen(trapezoid_weights(points)))

    def __len__(self):
        return self.points.size

    @property
    def zero_index(self):
        return self.n // 2

    @property
    def half_indices(self):
        """Indices of the nonnegative frequencies, 0 first."""
        return np.arange(self.zero_index, len(self))

    @property
    def mirror(self):
        """Index of −ω for each grid index."""
        return np.arange(len(self))[::-1]

    def is_self_conjugate(self, index):
        return index in (0, self.zero_index, len(self) - 1)

    def same_as(self, other):
        return self.n == other.n

    def whittle_indices(self, J=None):
        """Grid indices of 2πj/J, j = 1..J, wrapped into [−π, π]."""
        J = self.J if J is None else J
        if self.n % J:
            raise DimensionError(f'2πj/{J} is not on a grid of {self.n} intervals')
        step = self.n // J
        m = np.arange(1, J + 1) * step
        m = np.where(m > self.n // 2, m - self.n, m)
        return m + self.zero_index

    def mirror_half(self, half_values, conjugate=True):
        """Expand values on the nonnegative half to the full grid."""
        half_values = np.asarray(half_values)
        negative = half_values[:0:-1]
        if conjugate:
            negative = np.conj(negative)
        return np.concatenate([negative, half_values])


def frequency_grid_size(M_omega, J):
    """Smallest even multiple of ``J`` that is at least ``M_omega``."""
    q = max(1, math.ceil(M_omega / J))
    while (J * q) % 2:
        q += 1
    return J * q


def build_uniform_grids(M_t, M_omega, J=1):
    """Uniform time grid on [0, 1] and symmetric frequency grid holding 2πj/J."""
    if M_t < 2 or M_omega < 2:
        raise ArgumentError(f'grid counts must be at least 2, got M_t={M_t}, M_omega={M_omega}')
    if J < 1:
        raise ArgumentError(f'J must be at least 1, got {J}')
    return TimeGrid.uniform(M_t), FrequencyGrid(frequency_grid_size(M_omega, J), J)


def trapezoid_inner_product(f, g, grid):
    """⟨f, g⟩ = Σ w_m conj(f(t_m)) g(t_m), conjugate-linear in ``f``."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape[-1] != len(grid) or g.shape[-1] != len(grid):
        raise DimensionError(
            f'functions of length {f.shape[-1]} and {g.shape[-1]} on a grid of {len(grid)} points'
        )
    return np.sum(grid.weights * np.conj(f) * g, axis=-1)


@dataclass(frozen=True, eq=False)
class ComplexKernel:
    """An M_t × M_t complex matrix f(t, s) on a time grid."""

    values: np.ndarray
    grid: TimeGrid
    hermitian: bool = True

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (len(self.grid), len(self.grid)):
            raise DimensionError(f'kernel of shape {values.shape} on a grid of {len(self.grid)}')
        object.__setattr__(self, 'values', _frozen(values))
        if self.hermitian and self.hermitian_defect() > HERMITIAN_TOL * self.scale:
            raise InvariantViolation('kernel flagged Hermitian is not Hermitian')

    @property
    def scale(self):
        return max(float(np.max(np.abs(self.values))), 1.0)

    def hermitian_defect(self):
        return float(np.max(np.abs(self.values - self.values.conj().T)))

    def apply(self, psi):
        """Integral operator ∫ f(·, s) ψ(s) ds on the grid."""
        return self.values @ (self.grid.weights * psi)


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Ragged panel of noisy discrete observations.

    Subjects and curves are 0-based internally. Rows are kept ordered by
    (subject, curve) with the within-curve order preserved, which is the
    row order of the design matrix.
    """

    p: int
    J: int
    subjects: np.ndarray
    curves: np.ndarray
    times: np.ndarray
    values: np.ndarray
    noise_variances: Optional[np.ndarray] = None

    def __post_init__(self):
        subjects = np.asarray(self.subjects, dtype=np.int64)
        curves = np.asarray(self.curves, dtype=np.int64)
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if not (subjects.shape == curves.shape == times.shape == values.shape) or subjects.ndim != 1:
            raise DimensionError('subject, curve, time and value columns differ in length')
        if self.p < 1 or self.J < 1:
            raise ArgumentError(f'panel needs p >= 1 and J >= 1, got p={self.p}, J={self.J}')
        if subjects.size and (subjects.min() < 0 or subjects.max() >= self.p):
            raise DimensionError('subject index outside [0, p)')
        if curves.size and (curves.min() < 0 or curves.max() >= self.J):
            raise DimensionError('curve index outside [0, J)')
        order = np.lexsort((curves, subjects))
        for name, column in (('subjects', subjects), ('curves', curves), ('times', times), ('values', values)):
            object.__setattr__(self, name, _frozen(column[order]))
        if self.noise_variances is not None:
            noise = np.asarray(self.noise_variances, dtype=float)
            if noise.shape != (self.p,):
                raise DimensionError(f'expected {self.p} noise variances, got {noise.shape}')
            if np.any(noise <= 0):
                raise ArgumentError('noise variances must be positive')
            object.__setattr__(self, 'noise_variances', _frozen(noise))

    @classmethod
    def from_curves(cls, curves, p=None, J=None):
        """Build from a mapping {(i, j): (times, values)} with 0-based keys."""
        rows = [[], [], [], []]
        for (i, j), (t, y) in sorted(curves.items()):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            y = np.atleast_1d(np.asarray(y, dtype=float))
            if t.shape != y.shape:
                raise DimensionError(f'curve ({i}, {j}) has {t.size} times and {y.size} values')
            rows[0].append(np.full(t.size, i))
            rows[1].append(np.full(t.size, j))
            rows[2].append(t)
            rows[3].append(y)
        keys = list(curves)
        p = p if p is not None else max(i for i, _ in keys) + 1
        J = J if J is not None else max(j for _, j in keys) + 1
        columns = [np.concatenate(r) if r else np.zeros(0) for r in rows]
        return cls(p, J, *columns)

    def __len__(self):
        return self.times.size

    @property
    def counts(self):
        """N_ij as a p × J integer array."""
        flat = np.bincount(self.subjects * self.J + self.curves, minlength=self.p * self.J)
        return flat.reshape(self.p, self.J)

    @property
    def offsets(self):
        return np.concatenate([[0], np.cumsum(self.counts.ravel())])

    @property
    def mean_count(self):
        """N̄ = Σ N_ij / (pJ)."""
        return len(self) / (self.p * self.J)

    def curve(self, i, j):
        start, stop = self.offsets[i * self.J + j], self.offsets[i * self.J + j + 1]
        return self.times[start:stop], self.values[start:stop]

    def subject_rows(self, i):
        return self.subjects == i

    def subject(self, i):
        """Single-subject panel (p = 1) for subject ``i``."""
        rows = self.subject_rows(i)
        noise = None if self.noise_variances is None else self.noise_variances[i:i + 1]
        return ObservationSet(
            1, self.J, np.zeros(int(rows.sum()), dtype=np.int64), self.curves[rows],
            self.times[rows], self.values[rows], noise,
        )

    def head(self, J):
        """The first ``J`` curves of every subject."""
        if not 1 <= J <= self.J:
            raise ArgumentError(f'cannot keep {J} of {self.J} curves')
        rows = self.curves < J
        return ObservationSet(
            self.p, J, self.subjects[rows], self.curves[rows], self.times[rows],
            self.values[rows], self.noise_variances,
        )

    def with_noise(self, noise_variances):
        return replace(self, noise_variances=noise_variances)


@dataclass(frozen=True)
class Issue:
    kind: str
    subject: int
    curve: int
    message: str


@dataclass(frozen=True)
class ObservationReport:
    issues: list
    mean_count: float
    subject_mean_counts: np.ndarray

    @property
    def ok(self):
        return not any(issue.kind != 'empty_curve' for issue in self.issues)

    def by_kind(self, kind):
        return [issue for issue in self.issues if issue.kind == kind]


def validate_observations(obs):
    """Diagnose an observation panel without raising.

    Reports times outside [0, 1], non-finite values and empty curves
    (subjects and curves 1-based in messages), together with N̄ and the
    per-subject mean counts.
    """
    issues = []
    bad_time = (obs.times < 0) | (obs.times > 1) | ~np.isfinite(obs.times)
    for row in np.flatnonzero(bad_time):
        i, j = int(obs.subjects[row]), int(obs.curves[row])
        issues.append(Issue(
            'out_of_range', i, j,
            f'subject {i + 1}, curve {j + 1}: time {obs.times[row]!r} outside [0, 1]',
        ))
    for row in np.flatnonzero(~np.isfinite(obs.values)):
        i, j = int(obs.subjects[row]), int(obs.curves[row])
        issues.append(Issue('non_finite', i, j, f'subject {i + 1}, curve {j + 1}: non-finite value'))
    counts = obs.counts
    for i, j in zip(*np.nonzero(counts == 0)):
        issues.append(Issue('empty_curve', int(i), int(j), f'subject {i + 1}, curve {j + 1}: no observations'))
    report = ObservationReport(issues, obs.mean_count, counts.mean(axis=1))
    for issue in issues:
        logger.debug(issue.message)
    return report


def map_ordered(func, items, workers=None):
    """Apply ``func`` to ``items`` on a thread pool, keeping input order."""
    items = list(items)
    if not workers or workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, items))
