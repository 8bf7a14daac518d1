from django.core.exceptions import ValidationError

from ...artifact import save_truth
from ...io import write_observations
from ...simgen import gen_panel
from ..base import MpcaCommand


def parse_n_range(text: str):
    """'5-10' or '4,5' into (n_min, n_max)."""
    for separator in ('-', ','):
        if separator in text:
            low, high = text.split(separator, 1)
            break
    else:
        low = high = text
    try:
        return int(low), int(high)
    except ValueError:
        raise ValidationError({'simulation.n_range': [f'Expected N_MIN-N_MAX, got {text!r}.']})


class Command(MpcaCommand):
    help = 'Simulate a panel: observation CSV plus a truth file for scoring.'

    def add_command_arguments(self, parser):
        parser.add_argument('--out', required=True, help='Observation CSV to write.')
        parser.add_argument('--truth', help='Truth file to write.')
        parser.add_argument('--case', type=int, help='1 Gaussian, 2 t noise, 3 nonlinear scores.')
        parser.add_argument('--p', type=int, help='Number of subjects.')
        parser.add_argument('--J', type=int, help='Number of curves per subject.')
        parser.add_argument('--n-range', help='Observations per curve, e.g. 5-10.')
        parser.add_argument('--horizon', type=int, help='Extra curves past J kept for forecast scoring.')

    def config_overrides(self, options):
        overrides = {
            f'simulation.{key}': options[key]
            for key in ('case', 'p', 'J', 'horizon')
            if options.get(key) is not None
        }
        if options.get('n_range'):
            overrides['simulation.n_min'], overrides['simulation.n_max'] = parse_n_range(options['n_range'])
        return overrides

    def run(self, *args, **options):
        config = self.load_config(options)
        panel = gen_panel(config.sim_config().validate())
        write_observations(panel.obs, options['out'])
        if options.get('truth'):
            save_truth(panel, options['truth'])
        self.stdout.write(
            f'case {panel.cfg.case}: {panel.cfg.p} subjects, {panel.n_curves} curves, '
            f'{len(panel.obs)} observations written to {options["out"]}'
        )
