"""Local linear estimation of means, lagged autocovariances and noise.

Raw data are aggregated over duplicate design points before smoothing;
the weighted fit on the aggregated data is the same fit as on the raw
data, and the within-point sum of squares keeps GCV exact.
"""
import logging
from dataclasses import dataclass

import numpy as np

from .core import map_ordered
from .exceptions import ArgumentError, InsufficientDataError

logger = logging.getLogger(__name__)

GCV_CANDIDATES = 10
WIDEN_FACTOR = 1.5
MAX_WIDENINGS = 40
CHUNK = 128
NOISE_FLOOR = 1e-8
DIAGONAL_SHARE = 0.1


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1, 0.75 * (1 - u ** 2), 0.0)


def _gaussian(u):
    return np.exp(-0.5 * u ** 2) / np.sqrt(2 * np.pi)


KERNELS = {
    'epanechnikov': _epanechnikov,
    'gaussian': _gaussian,
}


def get_kernel(name):
    try:
        return KERNELS[name]
    except KeyError:
        raise ArgumentError(f'unknown smoothing kernel {name!r}; choose from {sorted(KERNELS)}') from None


@dataclass(frozen=True)
class SmoothingData:
    """Design points (n × d) with mean responses, counts and within-point SS."""

    points: np.ndarray
    values: np.ndarray
    counts: np.ndarray
    within_ss: float

    @classmethod
    def aggregate(cls, points, values):
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        values = np.asarray(values, dtype=float)
        unique, inverse = np.unique(points, axis=0, return_inverse=True)
        inverse = inverse.ravel()
        counts = np.bincount(inverse, minlength=len(unique)).astype(float)
        sums = np.bincount(inverse, weights=values, minlength=len(unique))
        means = sums / counts
        within = float(np.sum(values ** 2) - np.sum(counts * means ** 2))
        return cls(unique, means, counts, max(within, 0.0))

    @property
    def n(self):
        return float(self.counts.sum())

    @property
    def dim(self):
        return self.points.shape[1]


def _weighted_moments(data, eval_points, bandwidth, kernel):
    diff = data.points[None, :, :] - eval_points[:, None, :]
    k = np.prod(kernel(diff / bandwidth), axis=2) * data.counts[None, :]
    design = np.concatenate([np.ones(diff.shape[:2] + (1,)), diff], axis=2)
    moments = np.einsum('cn,cna,cnb->cab', k, design, design)
    rhs = np.einsum('cn,cna,n->ca', k, design, data.values)
    return moments, rhs, k


def _diagonal_moments(data, centres, bandwidth, kernel):
    """Moments of the fit linear along t = s and quadratic across it.

    ``data.points`` holds rotated coordinates (u, v) = ((t + s)/2, |t − s|/2)
    and ``bandwidth`` is the pair (along, across).
    """
    along, across = bandwidth
    du = data.points[None, :, 0] - centres[:, 0][:, None]
    v2 = np.broadcast_to(data.points[None, :, 1] ** 2, du.shape)
    k = kernel(du / along) * (kernel(data.points[:, 1] / across) * data.counts)[None, :]
    design = np.stack([np.ones(du.shape), du, v2], axis=2)
    moments = np.einsum('cn,cna,cnb->cab', k, design, design)
    rhs = np.einsum('cn,cna,n->ca', k, design, data.values)
    return moments, rhs, k


def _is_singular(moments):
    diag = np.einsum('caa->ca', moments)
    scale = np.prod(diag, axis=1)
    det = np.linalg.det(moments)
    return (diag[:, 0] <= 0) | (scale <= 0) | (det <= 1e-10 * scale)


def _fit_chunk(data, eval_points, bandwidth, kernel, k0, weighted_moments=_weighted_moments):
    size = len(eval_points)
    estimates = np.empty(size)
    leverage = np.empty(size)
    pending = np.arange(size)
    h = np.asarray(bandwidth, dtype=float)
    for widening in range(MAX_WIDENINGS + 1):
        moments, rhs, _ = weighted_moments(data, eval_points[pending], h, kernel)
        singular = _is_singular(moments)
        good = ~singular
        if np.any(good):
            unit = np.zeros(rhs.shape)
            unit[:, 0] = 1.0
            solved = np.linalg.solve(
                moments[good], np.stack([rhs[good], unit[good]], axis=2)
            )
            estimates[pending[good]] = solved[:, 0, 0]
            leverage[pending[good]] = k0 * solved[:, 0, 1]
        pending = pending[singular]
        if not pending.size:
            return estimates, leverage
        if widening == 0:
            logger.warning(
                'local fit singular at %d point(s); widening bandwidth %.4g locally',
                pending.size, float(np.max(h)),
            )
        h = h * WIDEN_FACTOR
    # Degenerate design (all data collinear): local constant fit at the widest bandwidth.
    _, rhs, k = weighted_moments(data, eval_points[pending], h, kernel)
    totals = k.sum(axis=1)
    fallback = np.average(data.values, weights=data.counts)
    estimates[pending] = np.where(totals > 0, rhs[:, 0] / np.where(totals > 0, totals, 1), fallback)
    leverage[pending] = 0.0
    logger.warning('local fit degenerate at %d point(s); using local constant', pending.size)
    return estimates, leverage


def local_linear(data, eval_points, bandwidth, kernel='epanechnikov', leverage=False):
    """Local linear estimates at ``eval_points`` (m × d).

    With ``leverage`` the per-observation hat value at each evaluation
    point is returned too (meaningful when evaluating at design points).
    """
    kern = get_kernel(kernel)
    eval_points = np.asarray(eval_points, dtype=float)
    if eval_points.ndim == 1:
        eval_points = eval_points[:, None]
    k0 = float(kern(np.zeros(1))[0]) ** data.dim
    parts = [
        _fit_chunk(data, eval_points[start:start + CHUNK], bandwidth, kern, k0)
        for start in range(0, len(eval_points), CHUNK)
    ]
    estimates = np.concatenate([p[0] for p in parts])
    hat = np.concatenate([p[1] for p in parts])
    return (estimates, hat) if leverage else estimates


def _spacings(data):
    gaps = []
    for axis in range(data.dim):
        coords = np.unique(data.points[:, axis])
        if coords.size > 1:
            gaps.append(np.diff(coords))
    return np.concatenate(gaps) if gaps else np.zeros(0)


def fallback_bandwidth(data):
    """1.5 × the median spacing between distinct design coordinates."""
    gaps = _spacings(data)
    return 1.5 * float(np.median(gaps)) if gaps.size else 1.0


def bandwidth_candidates(data, count=GCV_CANDIDATES):
    gaps = _spacings(data)
    if not gaps.size:
        return np.array([1.0])
    span = float(np.ptp(data.points, axis=0).max())
    low = 1.5 * float(gaps.max())
    high = max(0.5 * span, 2 * low)
    return np.geomspace(low, high, count)


def gcv_score(data, bandwidth, kernel):
    fitted, hat = local_linear(data, data.points, bandwidth, kernel, leverage=True)
    rss = float(np.sum(data.counts * (data.values - fitted) ** 2)) + data.within_ss
    trace = float(np.sum(data.counts * hat))
    dof = data.n - trace
    if dof <= 0 or not np.isfinite(rss):
        return np.inf
    return data.n * rss / dof ** 2


def select_bandwidth(data, kernel='epanechnikov'):
    """Generalised cross-validation over a 10-point log grid."""
    candidates = bandwidth_candidates(data)
    scores = np.array([gcv_score(data, h, kernel) for h in candidates])
    if not np.any(np.isfinite(scores)):
        h = fallback_bandwidth(data)
        logger.warning('GCV degenerate for all candidate bandwidths; using %.4g', h)
        return h
    return float(candidates[int(np.nanargmin(np.where(np.isfinite(scores), scores, np.nan)))])


def resolve_bandwidth(data, bandwidth, kernel):
    if bandwidth in (None, 'auto'):
        return select_bandwidth(data, kernel)
    bandwidth = float(bandwidth)
    if bandwidth <= 0:
        raise ArgumentError(f'bandwidth must be positive, got {bandwidth}')
    return bandwidth


@dataclass(frozen=True, eq=False)
class MeanFunctions:
    """μ̂_i sampled on the time grid, one row per subject."""

    grid: object
    values: np.ndarray

    def at(self, i, times):
        return self.grid.interpolate(self.values[i], times)


@dataclass(frozen=True, eq=False)
class AutocovField:
    """Ĉ_iih on the grid for lags 0..H−1; negative lags by transposition."""

    grid: object
    surfaces: np.ndarray  # (p, H, M_t, M_t)

    @property
    def lags(self):
        return self.surfaces.shape[1]

    def lag(self, i, h):
        if abs(h) >= self.lags:
            raise ArgumentError(f'lag {h} not estimated (only |h| < {self.lags})')
        surface = self.surfaces[i, abs(h)]
        return surface.T if h < 0 else surface

    def subject(self, i):
        return AutocovField(self.grid, self.surfaces[i:i + 1])


def estimate_mean(times, values, grid, bandwidth='auto', kernel='epanechnikov', subject=None):
    """Local linear fit of pooled (t, Y) of one subject, on the grid."""
    times = np.asarray(times, dtype=float)
    if np.unique(times).size < 3:
        raise InsufficientDataError('mean estimation needs at least 3 distinct times', subject=subject)
    data = SmoothingData.aggregate(times, values)
    h = resolve_bandwidth(data, bandwidth, kernel)
    logger.debug('mean bandwidth %.4g (subject %s)', h, subject)
    return local_linear(data, grid.points, h, kernel)


def estimate_means(obs, grid, bandwidth='auto', kernel='epanechnikov', workers=None):
    def one(i):
        rows = obs.subject_rows(i)
        return estimate_mean(obs.times[rows], obs.values[rows], grid, bandwidth, kernel, subject=i + 1)

    return MeanFunctions(grid, np.array(map_ordered(one, range(obs.p), workers)))


def _half_square_difference(r_a, r_b):
    return 0.5 * np.subtract.outer(r_a, r_b) ** 2


def _lag_products(obs, means, i, h, combine=np.outer):
    """Raw cross products for pairs (t_{i(j+h)z1}, t_{ijz2}).

    ``combine`` maps the two residual vectors to the pair values.
    """
    firsts, seconds, products = [], [], []
    for j in range(obs.J - h):
        t_a, y_a = obs.curve(i, j + h)
        t_b, y_b = obs.curve(i, j)
        if not t_a.size or not t_b.size:
            continue
        r_a = y_a - means.at(i, t_a)
        r_b = y_b - means.at(i, t_b)
        prod = combine(r_a, r_b)
        grid_a, grid_b = np.meshgrid(t_a, t_b, indexing='ij')
        keep = np.ones(prod.shape, dtype=bool)
        if h == 0:
            np.fill_diagonal(keep, False)
        firsts.append(grid_a[keep])
        seconds.append(grid_b[keep])
        products.append(prod[keep])
    if not products or not sum(p.size for p in products):
        return None
    return np.column_stack([np.concatenate(firsts), np.concatenate(seconds)]), np.concatenate(products)


def estimate_autocov(obs, means, h, grid, bandwidth='auto', kernel='epanechnikov', workers=None):
    """Smoothed lag-``h`` autocovariance surfaces, one per subject.

    Lag-0 pairs from the same observation are left out because they
    carry the noise variance; the lag-0 surface is symmetrised.
    """
    if abs(h) > obs.J - 1:
        raise ArgumentError(f'lag {h} exceeds J − 1 = {obs.J - 1}')
    if h < 0:
        positive = estimate_autocov(obs, means, -h, grid, bandwidth, kernel, workers)
        return np.transpose(positive, (0, 2, 1))
    mesh_t, mesh_s = np.meshgrid(grid.points, grid.points, indexing='ij')
    eval_points = np.column_stack([mesh_t.ravel(), mesh_s.ravel()])

    def one(i):
        pairs = _lag_products(obs, means, i, h)
        if pairs is None:
            raise InsufficientDataError(f'no observation pairs at lag {h}', subject=i + 1)
        data = SmoothingData.aggregate(*pairs)
        bw = resolve_bandwidth(data, bandwidth, kernel)
        logger.debug('lag %d covariance bandwidth %.4g (subject %d)', h, bw, i + 1)
        surface = local_linear(data, eval_points, bw, kernel).reshape(len(grid), len(grid))
        if h == 0:
            surface = (surface + surface.T) / 2
        return surface

    return np.array(map_ordered(one, range(obs.p), workers))


def estimate_autocov_field(obs, means, h_max, grid, bandwidth='auto', kernel='epanechnikov', workers=None):
    """Surfaces for every lag with nonzero Bartlett weight, 0 ≤ h < h_max."""
    lags = [
        estimate_autocov(obs, means, h, grid, bandwidth, kernel, workers)
        for h in range(h_max)
    ]
    return AutocovField(grid, np.stack(lags, axis=1))


def noise_floor(values):
    variance = float(np.var(values)) if len(values) else 0.0
    return NOISE_FLOOR * variance if variance > 0 else NOISE_FLOOR ** 2


def diagonal_band(points):
    """Half-width of the band around t = s that feeds the diagonal fit.

    The band holds at least three distinct nonzero offsets |t − s|/2 and
    a tenth of the pairs.
    """
    offsets = np.abs(points[:, 0] - points[:, 1]) / 2
    distinct = np.unique(offsets[offsets > 0].round(10))
    if not distinct.size:
        raise InsufficientDataError('no off-diagonal pairs near t = s')
    third = float(distinct[min(2, distinct.size - 1)])
    return max(1.5 * third, float(np.quantile(offsets, DIAGONAL_SHARE)))


def diagonal_limit(pairs, eval_points, bandwidth, band=None, kernel='epanechnikov'):
    """Limit at t = s of values observed on off-diagonal pairs (t, s).

    Pairs are rotated to u = (t + s)/2 and v = |t − s|/2; the local fit is
    linear in u and quadratic in v, so curvature across the diagonal does
    not flatten the ridge. ``bandwidth`` applies along u and ``band``
    across it.
    """
    points, values = pairs
    points = np.asarray(points, dtype=float)
    band = diagonal_band(points) if band is None else float(band)
    rotated = np.column_stack([points.mean(axis=1), np.abs(points[:, 0] - points[:, 1]) / 2])
    data = SmoothingData.aggregate(rotated, values)
    kern = get_kernel(kernel)
    centres = np.asarray(eval_points, dtype=float).reshape(-1, 1)
    parts = [
        _fit_chunk(data, centres[start:start + CHUNK], (bandwidth, band), kern, 0.0, _diagonal_moments)[0]
        for start in range(0, len(centres), CHUNK)
    ]
    return np.concatenate(parts)


def estimate_noise_variance(times, values, mean, pairs, grid, bandwidth='auto', kernel='epanechnikov'):
    """σ̂² as the central-interval average of V̂(t) − Ĉ(t, t).

    ``pairs`` holds half squared differences ½(r_a − r_b)² of demeaned
    observations from the same curve, whose mean is
    ½V(t) + ½V(s) − C(t, s); its limit at t = s is V(t) − C(t, t). The
    bandwidth along the diagonal is the one V̂ would use on the squared
    residuals, and the average runs over grid points in [0.25, 0.75].
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    residuals = values - grid.interpolate(mean, times)
    h = resolve_bandwidth(SmoothingData.aggregate(times, residuals ** 2), bandwidth, kernel)
    central = (grid.points >= 0.25) & (grid.points <= 0.75)
    if not np.any(central):
        central = np.ones(len(grid), dtype=bool)
    excess = float(np.mean(diagonal_limit(pairs, grid.points[central], h, kernel=kernel)))
    return max(noise_floor(values), excess)


def estimate_noise_variances(obs, means, bandwidth='auto', kernel='epanechnikov'):
    sigma2 = np.empty(obs.p)
    for i in range(obs.p):
        pairs = _lag_products(obs, means, i, 0, combine=_half_square_difference)
        if pairs is None:
            raise InsufficientDataError('no observation pairs within a curve', subject=i + 1)
        rows = obs.subject_rows(i)
        sigma2[i] = estimate_noise_variance(
            obs.times[rows], obs.values[rows], means.values[i], pairs, means.grid, bandwidth, kernel,
        )
        logger.debug('noise variance subject %d: %.4g', i + 1, sigma2[i])
    return sigma2
