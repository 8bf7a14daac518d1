"""Single-file model and truth containers.

Layout: an 8-byte little-endian header length, a JSON manifest with
sorted keys, then little-endian float64/complex128 arrays at the byte
offsets the manifest records.
"""
import json
import logging
import struct

import numpy as np

from .core import FrequencyGrid, TimeGrid
from .exceptions import ModelFormatError
from .filters import FilterBank, PhaseMultiplier
from .scores import ScoreArray
from .simgen import PrecisionSpec, SimConfig, TrueFilters, TruthPanel
from .smoothing import MeanFunctions
from .spectral import ScoreSpectralDensity, SpectralField
from .tasks import FittedModel

logger = logging.getLogger(__name__)

FORMAT = 'spectral-mpca-model'
VERSION = '1.0'
HEADER = struct.Struct('<Q')


def _dtype(array):
    return '<c16' if np.iscomplexobj(array) else '<f8'


def write_container(path, kind, meta, arrays):
    """Write ``arrays`` (name → ndarray) and ``meta`` into one file."""
    entries = {}
    payload = []
    offset = 0
    for name in sorted(arrays):
        array = np.ascontiguousarray(arrays[name], dtype=_dtype(arrays[name]))
        data = array.tobytes()
        entries[name] = {'dtype': array.dtype.str, 'shape': list(array.shape), 'offset': offset}
        payload.append(data)
        offset += len(data)
    manifest = {'format': f'{FORMAT}/{VERSION}', 'kind': kind, 'meta': meta, 'arrays': entries}
    header = json.dumps(manifest, sort_keys=True, separators=(',', ':')).encode('utf-8')
    with open(path, 'wb') as handle:
        handle.write(HEADER.pack(len(header)))
        handle.write(header)
        for data in payload:
            handle.write(data)


def read_container(path, kind):
    try:
        with open(path, 'rb') as handle:
            blob = handle.read()
    except OSError as exc:
        raise ModelFormatError(f'cannot read {path}: {exc.strerror}')
    if len(blob) < HEADER.size:
        raise ModelFormatError(f'{path} is too short to be a {FORMAT} file')
    (length,) = HEADER.unpack_from(blob)
    try:
        manifest = json.loads(blob[HEADER.size:HEADER.size + length].decode('utf-8'))
        name, version = manifest['format'].split('/')
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, ValueError):
        raise ModelFormatError(f'{path} has no readable {FORMAT} header')
    if name != FORMAT or version.split('.')[0] != VERSION.split('.')[0]:
        raise ModelFormatError(f'{path} is {manifest["format"]}, expected {FORMAT}/{VERSION}')
    if manifest.get('kind') != kind:
        raise ModelFormatError(f'{path} holds a {manifest.get("kind")}, not a {kind}')
    start = HEADER.size + length
    arrays = {}
    for key, entry in manifest['arrays'].items():
        dtype = np.dtype(entry['dtype'])
        count = int(np.prod(entry['shape'], dtype=np.int64))
        begin = start + entry['offset']
        if begin + count * dtype.itemsize > len(blob):
            raise ModelFormatError(f'{path} is truncated (array {key})')
        arrays[key] = np.frombuffer(blob, dtype=dtype, count=count, offset=begin).reshape(entry['shape']).copy()
    return manifest['meta'], arrays


def save_model(model, path, config=None):
    arrays = {
        'tgrid': model.tgrid.points,
        'means': model.means.values,
        'noise_variances': model.noise_variances,
        'score_spectra': model.spectra.values,
        'scores': model.scores.values,
    }
    for k, phi in enumerate(model.bank.filters):
        arrays[f'filters/{k}'] = phi
    for k, nu in enumerate(model.bank.phases):
        arrays[f'phases/{k}'] = nu.values
    for name, value in model.diagnostics.items():
        arrays[f'diagnostics/{name}'] = np.asarray(value, dtype=float)
    if model.marginal is not None:
        arrays['marginal'] = model.marginal.values
    meta = {
        'method': model.method,
        'p': model.p,
        'J': model.J,
        'K': model.K,
        'L': list(model.L),
        'h_max': model.h_max,
        'frequency_intervals': model.fgrid.n,
        'config_hash': model.config_hash,
        'config': config.as_dict() if config is not None else None,
        'phase_objectives': [nu.objective_trace for nu in model.bank.phases],
    }
    write_container(path, 'model', meta, arrays)
    logger.debug('model written to %s', path)


def load_model(path):
    meta, arrays = read_container(path, 'model')
    try:
        tgrid = TimeGrid(arrays['tgrid'])
        fgrid = FrequencyGrid(meta['frequency_intervals'], meta['J'])
        K = meta['K']
        phases = [
            PhaseMultiplier(fgrid, arrays[f'phases/{k}'], list(meta['phase_objectives'][k]))
            for k in range(K) if f'phases/{k}' in arrays
        ]
        bank = FilterBank(tgrid, [arrays[f'filters/{k}'] for k in range(K)], phases)
        marginal = SpectralField(tgrid, fgrid, arrays['marginal']) if 'marginal' in arrays else None
        diagnostics = {
            key.split('/', 1)[1]: value for key, value in arrays.items() if key.startswith('diagnostics/')
        }
        return FittedModel(
            tgrid, fgrid,
            MeanFunctions(tgrid, arrays['means']),
            bank,
            arrays['noise_variances'],
            ScoreSpectralDensity(fgrid, arrays['score_spectra']),
            ScoreArray(meta['p'], meta['J'], meta['L'], arrays['scores']),
            meta['h_max'],
            config_hash=meta['config_hash'],
            method=meta['method'],
            diagnostics=diagnostics,
            marginal=marginal,
        )
    except (KeyError, IndexError, TypeError, ValueError) as exc:
        raise ModelFormatError(f'{path} is an incomplete model: {exc}')


def save_truth(panel, path):
    arrays = {
        'grid': panel.grid,
        'curves': panel.curves,
        'curve_energy': panel.curve_energy,
        'noise_variances': panel.noise_variances,
    }
    for k, path_k in enumerate(panel.scores):
        arrays[f'scores/{k}'] = path_k
        arrays[f'theta/{k}'] = panel.precisions[k].theta
    meta = {
        'sim': panel.cfg.as_dict(),
        'edges': [[list(edge) for edge in spec.edges] for spec in panel.precisions],
    }
    write_container(path, 'truth', meta, arrays)


def load_truth(path):
    """TruthPanel without its observations (those live in the CSV)."""
    meta, arrays = read_container(path, 'truth')
    try:
        cfg = SimConfig(**meta['sim'])
        precisions = [
            PrecisionSpec(arrays[f'theta/{k}'], tuple(tuple(edge) for edge in meta['edges'][k]))
            for k in range(cfg.K)
        ]
        return TruthPanel(
            cfg, arrays['grid'], precisions, TrueFilters(cfg.p, tuple([cfg.L] * cfg.K)),
            [arrays[f'scores/{k}'] for k in range(cfg.K)], arrays['curves'], None,
            arrays['curve_energy'], arrays['noise_variances'],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f'{path} is an incomplete truth file: {exc}')
