# third party libraries
import numpy as np
import pandas as pd
# local libraries
from .core import ObservationSet
from .exceptions import DataError, InsufficientDataError

COLUMNS = ['subject', 'curve', 'time', 'value']


def read_observations(path, p=None, J=None):
    """Long-format CSV ``subject,curve,time,value`` (1-based indices)."""
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except FileNotFoundError:
        raise DataError(f'observation file {path} does not exist')
    except pd.errors.EmptyDataError:
        raise InsufficientDataError(f'observation file {path} is empty')
    except pd.errors.ParserError as exc:
        raise DataError(f'cannot parse {path}: {exc}')
    missing = [column for column in COLUMNS if column not in frame.columns]
    if missing:
        raise DataError(f'{path} lacks column(s) {", ".join(missing)}')
    if frame.empty:
        raise InsufficientDataError(f'observation file {path} has no rows')
    indices = frame[['subject', 'curve']]
    if indices.isna().any().any() or not np.all(indices.to_numpy() == np.round(indices.to_numpy())):
        raise DataError(f'{path}: subject and curve must be whole numbers')
    subjects = frame['subject'].to_numpy(dtype=np.int64) - 1
    curves = frame['curve'].to_numpy(dtype=np.int64) - 1
    if subjects.min() < 0 or curves.min() < 0:
        raise DataError(f'{path}: subject and curve numbers start at 1')
    try:
        times = frame['time'].to_numpy(dtype=float)
        values = frame['value'].to_numpy(dtype=float)
    except ValueError as exc:
        raise DataError(f'{path}: {exc}')
    return ObservationSet(
        p or int(subjects.max()) + 1,
        J or int(curves.max()) + 1,
        subjects, curves, times, values,
    )


def observations_frame(obs):
    return pd.DataFrame({
        'subject': obs.subjects + 1,
        'curve': obs.curves + 1,
        'time': obs.times,
        'value': obs.values,
    }, columns=COLUMNS)


def write_observations(obs, path):
    observations_frame(obs).to_csv(path, index=False)


def curves_frame(curves, grid, first_curve=1):
    """Long format for a (p, n, M_t) curve array; curves numbered from ``first_curve``."""
    curves = np.asarray(curves, dtype=float)
    p, n, m = curves.shape
    points = getattr(grid, 'points', grid)
    subject, curve, time = np.meshgrid(np.arange(1, p + 1), np.arange(first_curve, first_curve + n),
                                       points, indexing='ij')
    return pd.DataFrame({
        'subject': subject.ravel(),
        'curve': curve.ravel(),
        'time': time.ravel(),
        'value': curves.ravel(),
    }, columns=COLUMNS)


def write_curves(curves, grid, path, first_curve=1):
    curves_frame(curves, grid, first_curve).to_csv(path, index=False)


def read_curves(path):
    """Inverse of write_curves: returns (curves, time points, first curve number)."""
    try:
        frame = pd.read_csv(path, float_precision='round_trip')
    except (FileNotFoundError, pd.errors.EmptyDataError) as exc:
        raise DataError(f'cannot read curves from {path}: {exc}')
    frame = frame.sort_values(['subject', 'curve', 'time'], kind='stable')
    points = np.unique(frame['time'].to_numpy(dtype=float))
    p = frame['subject'].nunique()
    first = int(frame['curve'].min())
    n = frame['curve'].nunique()
    if len(frame) != p * n * points.size:
        raise DataError(f'{path} is not a complete curve table')
    return frame['value'].to_numpy(dtype=float).reshape(p, n, points.size), points, first
