"""MAP extraction of latent scores under a Whittle prior.

Scores ξ_ijk for j = 1 − L_k .. J + L_k are stacked component-major,
then by curve, then by subject. The design matrix A maps them onto the
demeaned observations; the prior precision Q is block diagonal over
components and is applied through its DFT factorisation.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import LinearOperator, cg

from .core import validate_observations
from .exceptions import ArgumentError, DimensionError, ObservationError, SolverError
from .spectral import SCORE_SPECTRUM_FLOOR

logger = logging.getLogger(__name__)

RIDGE = 1e-10
MAX_RESTARTS = 3


def _offsets(p, J, L):
    sizes = [p * (J + 2 * L_k) for L_k in L]
    return np.concatenate([[0], np.cumsum(sizes)]).astype(int)


@dataclass(frozen=True, eq=False)
class ScoreArray:
    """Flat real score vector with its (K, p, J, L_k) layout."""

    p: int
    J: int
    L: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'L', tuple(int(L_k) for L_k in self.L))
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.size,):
            raise DimensionError(f'score vector of shape {values.shape}, expected ({self.size},)')
        object.__setattr__(self, 'values', values)

    @property
    def K(self):
        return len(self.L)

    @property
    def offsets(self):
        return _offsets(self.p, self.J, self.L)

    @property
    def size(self):
        return int(_offsets(self.p, self.J, self.L)[-1])

    def T(self, k):
        return self.J + 2 * self.L[k]

    def series(self, k):
        """Scores of component k as a (J + 2L_k) × p array; row 0 is curve 1 − L_k."""
        start, stop = self.offsets[k], self.offsets[k + 1]
        return self.values[start:stop].reshape(self.T(k), self.p)

    def at(self, i, j, k):
        """ξ for 0-based subject ``i`` and 0-based curve ``j`` (may be negative or ≥ J)."""
        return self.series(k)[j + self.L[k], i]

    @classmethod
    def from_series(cls, series, J, L):
        p = series[0].shape[1]
        return cls(p, J, L, np.concatenate([np.asarray(s, dtype=float).ravel() for s in series]))

    @classmethod
    def zeros(cls, p, J, L):
        return cls(p, J, L, np.zeros(int(_offsets(p, J, L)[-1])))


@dataclass(frozen=True, eq=False)
class DesignMatrix:
    matrix: sparse.csr_matrix
    p: int
    J: int
    L: tuple
    row_subjects: np.ndarray

    @property
    def offsets(self):
        return _offsets(self.p, self.J, self.L)

    @property
    def shape(self):
        return self.matrix.shape

    def column(self, i, j, k):
        """Column of ξ_{i, j, k} for 0-based i and curve index j in [−L_k, J + L_k)."""
        return int(self.offsets[k] + (j + self.L[k]) * self.p + i)


def build_design(obs, bank, means, noise_variances=None):
    """Design matrix A, demeaned observations y and weights diag(W).

    Row m(i, j, z) carries φ_kl(t_ijz) in column (i, j + l, k) for |l| ≤ L_k.
    """
    if len(obs) == 0:
        raise ArgumentError('cannot build a design matrix without observations')
    report = validate_observations(obs)
    bad = report.by_kind('out_of_range') + report.by_kind('non_finite')
    if bad:
        raise ObservationError(bad[0].message)
    noise = obs.noise_variances if noise_variances is None else np.asarray(noise_variances, dtype=float)
    if noise is None:
        raise ArgumentError('noise variances are needed to weight the observations')
    L = tuple(bank.L)
    offsets = _offsets(obs.p, obs.J, L)
    n = len(obs)
    rows, cols, data = [], [], []
    for k in range(bank.K):
        phi = bank.at(k, obs.times)
        for index, l in enumerate(bank.lags(k)):
            rows.append(np.arange(n))
            cols.append(offsets[k] + (obs.curves + l + L[k]) * obs.p + obs.subjects)
            data.append(phi[index])
    matrix = sparse.csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, int(offsets[-1])),
    )
    y = obs.values.copy()
    for i in range(obs.p):
        rows_i = obs.subject_rows(i)
        y[rows_i] -= means.at(i, obs.times[rows_i])
    weights = 1.0 / noise[obs.subjects]
    return DesignMatrix(matrix, obs.p, obs.J, L, obs.subjects.copy()), y, weights


def whittle_dft(T, J):
    """F[j, r] = exp(i r ω_j) / sqrt(2πT) for ω_j = 2πj/J, j = 1..J, r = 1..T."""
    omegas = 2 * np.pi * np.arange(1, J + 1) / J
    return np.exp(1j * np.outer(omegas, np.arange(1, T + 1))) / np.sqrt(2 * np.pi * T)


@dataclass(frozen=True, eq=False)
class WhittlePrecision:
    """Q = diag(Q_1, …, Q_K), Q_k = (F_k ⊗ I_p)* D_k (F_k ⊗ I_p).

    ``inverse_spectra[k]`` is the J × p array of η̃_ik(ω_j)^{−1}.
    """

    p: int
    J: int
    L: tuple
    dft: list
    inverse_spectra: list

    @property
    def offsets(self):
        return _offsets(self.p, self.J, self.L)

    @property
    def size(self):
        return int(self.offsets[-1])

    def transform(self, xi, k):
        """ξ̃_k as a J × p array (rows are frequencies)."""
        offsets = self.offsets
        block = np.asarray(xi)[offsets[k]:offsets[k + 1]].reshape(-1, self.p)
        return self.dft[k] @ block

    def quadratic(self, xi):
        """Σ_k Σ_j ξ̃_k(ω_j)* Φ_k(ω_j) ξ̃_k(ω_j)."""
        total = 0.0
        for k in range(len(self.L)):
            total += np.sum(self.inverse_spectra[k] * np.abs(self.transform(xi, k)) ** 2)
        return float(total)

    def apply(self, xi):
        """Re(Q) ξ for real ξ, matrix-free."""
        out = np.empty(self.size)
        offsets = self.offsets
        for k in range(len(self.L)):
            scaled = self.inverse_spectra[k] * self.transform(xi, k)
            out[offsets[k]:offsets[k + 1]] = (self.dft[k].conj().T @ scaled).real.ravel()
        return out

    def diagonal(self):
        parts = []
        for k, F in enumerate(self.dft):
            T = F.shape[1]
            per_subject = self.inverse_spectra[k].sum(axis=0) / (2 * np.pi * T)
            parts.append(np.tile(per_subject, T))
        return np.concatenate(parts)

    def block(self, k):
        """Dense complex Q_k."""
        kron = np.kron(self.dft[k], np.eye(self.p))
        return kron.conj().T @ (self.inverse_spectra[k].ravel()[:, None] * kron)

    def dense(self):
        blocks = [self.block(k) for k in range(len(self.L))]
        out = np.zeros((self.size, self.size), dtype=complex)
        offsets = self.offsets
        for k, block in enumerate(blocks):
            out[offsets[k]:offsets[k + 1], offsets[k]:offsets[k + 1]] = block
        return out


def build_whittle_precision(spectra, J, L):
    """Whittle prior precision from score spectral densities at 2πj/J.

    Values are floored at 1e-8 × their maximum before inversion.
    """
    L = tuple(int(L_k) for L_k in L)
    if spectra.K != len(L):
        raise DimensionError(f'{spectra.K} score spectra for {len(L)} components')
    values = spectra.whittle(J)  # (p, K, J)
    if not np.all(np.isfinite(values)) or values.max() <= 0:
        raise ArgumentError('score spectral densities must be finite with a positive maximum')
    floor = SCORE_SPECTRUM_FLOOR * float(values.max())
    if np.any(values < floor):
        logger.warning('%d score spectral value(s) floored at %.3e', int(np.sum(values < floor)), floor)
        values = np.maximum(values, floor)
    return WhittlePrecision(
        spectra.p, J, L,
        [whittle_dft(J + 2 * L_k, J) for L_k in L],
        [1.0 / values[:, k, :].T for k in range(len(L))],
    )


def _normal_operator(design, weights, precision, ridge):
    A = design.matrix
    AT = A.T.tocsr()

    def matvec(v):
        v = np.ravel(v)
        out = AT @ (weights * (A @ v))
        if precision is not None:
            out = out + precision.apply(v)
        if ridge:
            out = out + ridge * v
        return out

    d = A.shape[1]
    return LinearOperator((d, d), matvec=matvec, dtype=float)


def map_scores(design, y, weights, precision=None, rtol=1e-8, max_iter_factor=10):
    """Solve (AᵀWA + Re Q) ξ = AᵀWy by Jacobi-preconditioned conjugate gradient."""
    A = design.matrix
    if A.shape[0] != y.size or weights.shape != y.shape:
        raise DimensionError(f'design of shape {A.shape} for {y.size} observations')
    if precision is not None and precision.size != A.shape[1]:
        raise DimensionError(f'precision of size {precision.size} for {A.shape[1]} scores')
    d = A.shape[1]
    rhs = A.T @ (weights * y)
    scale = float(np.linalg.norm(rhs))
    if scale == 0:
        return ScoreArray(design.p, design.J, design.L, np.zeros(d))

    diagonal = np.asarray(A.multiply(A).T @ weights).ravel()
    if precision is not None:
        diagonal = diagonal + precision.diagonal()
    ridge = 0.0
    if np.any(diagonal <= 0):
        ridge = RIDGE
        logger.warning(
            '%d score columns are unconstrained; adding a %.0e ridge',
            int(np.sum(diagonal <= 0)), RIDGE,
        )
        diagonal = diagonal + ridge
    operator = _normal_operator(design, weights, precision, ridge)
    preconditioner = LinearOperator((d, d), matvec=lambda v: np.ravel(v) / diagonal, dtype=float)

    xi = np.zeros(d)
    residual = np.inf
    for _ in range(MAX_RESTARTS):
        xi, info = cg(operator, rhs, x0=xi, rtol=rtol, atol=0.0, maxiter=max_iter_factor * d, M=preconditioner)
        residual = float(np.linalg.norm(operator @ xi - rhs)) / scale
        if residual <= rtol:
            break
    else:
        raise SolverError('conjugate gradient did not converge', residual=residual)
    logger.debug('MAP scores solved with relative residual %.3e', residual)
    return ScoreArray(design.p, design.J, design.L, xi)


def log_posterior(xi, design, y, weights, precision=None):
    """−½‖W^{1/2}(y − Aξ)‖² − ½ ξᵀ Re(Q) ξ, up to a constant."""
    xi = np.asarray(getattr(xi, 'values', xi), dtype=float)
    misfit = y - design.matrix @ xi
    value = -0.5 * float(np.sum(weights * misfit ** 2))
    if precision is not None:
        value -= 0.5 * precision.quadratic(xi)
    return value


def posterior_objective(xi, design, y, weights, precision=None):
    return -log_posterior(xi, design, y, weights, precision)


def log_posterior_gradient(xi, design, y, weights, precision=None):
    """Gradient of the log posterior assembled subject by subject.

    The likelihood part uses each subject's own rows and columns; the
    prior part is Re{Σ_j Φ_k(ω_j) Ξ_k ρ_k(ω_j) ρ_k(ω_j)*} row by row.
    """
    xi = np.asarray(getattr(xi, 'values', xi), dtype=float)
    p, J = design.p, design.J
    offsets = design.offsets
    grad = np.zeros_like(xi)
    A = design.matrix.tocsc()
    for i in range(p):
        rows = design.row_subjects == i
        columns = np.concatenate([
            offsets[k] + np.arange(J + 2 * L_k) * p + i for k, L_k in enumerate(design.L)
        ])
        A_i = A[:, columns].tocsr()[rows]
        misfit = y[rows] - A_i @ xi[columns]
        grad[columns] += A_i.T @ (weights[rows] * misfit)
    if precision is None:
        return grad
    omegas = 2 * np.pi * np.arange(1, J + 1) / J
    for k, L_k in enumerate(design.L):
        T = J + 2 * L_k
        Xi = xi[offsets[k]:offsets[k + 1]].reshape(T, p).T  # p × T
        prior = np.zeros((p, T), dtype=complex)
        for j, omega in enumerate(omegas):
            rho = np.conj(np.exp(1j * np.arange(1, T + 1) * omega)) / np.sqrt(2 * np.pi * T)
            prior += precision.inverse_spectra[k][j][:, None] * (Xi @ rho)[:, None] * np.conj(rho)[None, :]
        grad[offsets[k]:offsets[k + 1]] -= prior.real.T.ravel()
    return grad
