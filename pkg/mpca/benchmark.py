"""Monte Carlo comparison of the methods on simulated panels."""
import json
import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd

from .conf import RunConfig
from .core import TimeGrid, map_ordered
from .exceptions import ArgumentError, MpcaError
from .pipeline import METHODS, fit_method, impute_curves, one_step_forecasts
from .simgen import gen_panel
from .tasks import nmse, nmspe

logger = logging.getLogger(__name__)

COLUMNS = ['case', 'J', 'nrange', 'method', 'rep', 'metric', 'value']
METRICS = ('nmse', 'nmspe')


@dataclass(frozen=True)
class Scenario:
    case: int
    J: int
    n_min: int
    n_max: int
    metrics: tuple = ('nmse',)
    horizon: int = 5

    @property
    def nrange(self):
        return f'{self.n_min}-{self.n_max}'

    @classmethod
    def from_dict(cls, data):
        try:
            n_min, n_max = data['nrange']
            metrics = tuple(data.get('metrics', ('nmse',)))
            scenario = cls(int(data['case']), int(data['J']), int(n_min), int(n_max), metrics,
                           int(data.get('horizon', 5)))
        except (KeyError, TypeError, ValueError) as exc:
            raise ArgumentError(f'malformed scenario {data!r}: {exc}')
        unknown = set(scenario.metrics) - set(METRICS)
        if unknown:
            raise ArgumentError(f'unknown metric(s) {", ".join(sorted(unknown))}')
        return scenario


def load_scenarios(path):
    """Scenario file: {'scenarios': [...], 'methods': [...], 'reps': n, 'seed': s}."""
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except (OSError, json.JSONDecodeError) as exc:
        raise ArgumentError(f'cannot read scenario file {path}: {exc}')
    scenarios = [Scenario.from_dict(item) for item in data.get('scenarios', [])]
    if not scenarios:
        raise ArgumentError(f'{path} lists no scenarios')
    return scenarios, data


def replicate_seed(seed, scenario_index, rep):
    return int(np.random.SeedSequence([seed, scenario_index, rep]).generate_state(1)[0])


def run_replicate(scenario, methods, rep_seed, config, workers=1):
    """Metric rows (method, metric, value) for one simulated panel."""
    horizon = scenario.horizon if 'nmspe' in scenario.metrics else 0
    sim = config.sim_config(
        case=scenario.case, J=scenario.J, n_min=scenario.n_min, n_max=scenario.n_max,
        horizon=horizon, seed=rep_seed,
    )
    panel = gen_panel(sim)
    rows = []
    for method in methods:
        fit = None
        truth = None
        if 'nmse' in scenario.metrics:
            fit = fit_method(method, panel.obs.head(scenario.J), config, K=sim.K, workers=workers)
            truth = panel.curves_on(fit.tgrid)
            rows.append((method, 'nmse', nmse(truth[:, :scenario.J], impute_curves(fit), fit.tgrid)))
        if 'nmspe' in scenario.metrics:
            forecasts = one_step_forecasts(
                panel.obs, method, scenario.J, horizon, config, K=sim.K, workers=workers,
            )
            grid = fit.tgrid if fit is not None else TimeGrid.uniform(config.grids.get('M_t', 51))
            truth = panel.curves_on(grid)
            value = nmspe(truth[:, scenario.J:scenario.J + horizon], forecasts, grid)
            rows.append((method, 'nmspe', value))
    return rows


@dataclass(frozen=True, eq=False)
class BenchmarkResult:
    rows: pd.DataFrame
    failures: int

    def summary(self):
        """Mean, standard deviation and count per scenario, method and metric."""
        if self.rows.empty:
            return pd.DataFrame(columns=['case', 'J', 'nrange', 'method', 'metric', 'mean', 'std', 'count'])
        grouped = self.rows.groupby(['case', 'J', 'nrange', 'method', 'metric'], sort=True)['value']
        return grouped.agg(['mean', 'std', 'count']).reset_index()

    def write(self, path, summary_path=None):
        self.rows.to_csv(path, index=False)
        if summary_path:
            self.summary().to_csv(summary_path, index=False)


def run_benchmark(scenarios, methods=('spectral_mpca', 'individual_spectral'), reps=20, seed=0,
                  config=None, workers=None):
    """Run every (scenario, replicate, method); failed replicates are counted, not fatal."""
    config = config or RunConfig()
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ArgumentError(f'unknown method(s) {", ".join(unknown)}; choose from {", ".join(sorted(METHODS))}')
    if reps < 1:
        raise ArgumentError(f'reps must be at least 1, got {reps}')
    workers = workers or config.workers
    jobs = [(index, scenario, rep) for index, scenario in enumerate(scenarios) for rep in range(1, reps + 1)]

    def one(job):
        index, scenario, rep = job
        try:
            return run_replicate(scenario, methods, replicate_seed(seed, index, rep), config)
        except (MpcaError, np.linalg.LinAlgError) as exc:
            logger.warning('case %d, J=%d, %s, rep %d failed: %s',
                           scenario.case, scenario.J, scenario.nrange, rep, exc)
            return None

    results = map_ordered(one, jobs, workers)
    records = []
    failures = 0
    for (index, scenario, rep), rows in zip(jobs, results):
        if rows is None:
            failures += 1
            continue
        for method, metric, value in rows:
            records.append((scenario.case, scenario.J, scenario.nrange, method, rep, metric, value))
    frame = pd.DataFrame.from_records(records, columns=COLUMNS)
    logger.info('benchmark finished: %d rows, %d failed replicates', len(frame), failures)
    return BenchmarkResult(frame, failures)
