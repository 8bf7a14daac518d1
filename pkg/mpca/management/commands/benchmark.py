from django.conf import settings

from ...benchmark import load_scenarios, run_benchmark
from ..base import MpcaCommand


class Command(MpcaCommand):
    help = 'Run the Monte Carlo benchmark and write per-replicate and summary CSVs.'

    def add_command_arguments(self, parser):
        parser.add_argument('--scenarios', help='Scenario JSON (default: the shipped benchmark.json).')
        parser.add_argument('--reps', type=int, help='Replicates per scenario.')
        parser.add_argument('--methods', help='Comma separated methods.')
        parser.add_argument('--out', required=True, help='Per-replicate results CSV.')
        parser.add_argument('--summary', help='Summary CSV (default: next to --out).')

    def run(self, *args, **options):
        path = options.get('scenarios') or settings.SPECTRAL_MPCA_BENCHMARK_FILE
        scenarios, data = load_scenarios(path)
        defaults = dict(data.get('config') or {})
        if 'seed' in data:
            defaults.setdefault('seed', data['seed'])
        config = self.load_config(options, defaults)
        methods = options['methods'].split(',') if options.get('methods') else data.get(
            'methods', ['spectral_mpca', 'individual_spectral']
        )
        reps = options['reps'] or data.get('reps', 20)
        result = run_benchmark(scenarios, [m.strip() for m in methods], reps, config.seed, config)
        summary_path = options.get('summary') or str(options['out']).replace('.csv', '') + '_summary.csv'
        result.write(options['out'], summary_path)
        self.stdout.write(result.summary().to_string(index=False))
        self.stdout.write(f'{result.failures} failed replicate(s)')
