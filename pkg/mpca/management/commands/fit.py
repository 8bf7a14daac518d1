from ...artifact import save_model
from ...io import read_observations
from ...pipeline import fit_model
from ..base import MpcaCommand


class Command(MpcaCommand):
    help = 'Estimate marginal functional filters and scores from an observation CSV.'

    def add_command_arguments(self, parser):
        parser.add_argument('observations', help='CSV with columns subject,curve,time,value.')
        parser.add_argument('--out', required=True, help='Model file to write.')
        parser.add_argument('--K', type=int, help='Pin the number of components.')
        parser.add_argument('--J', type=int, help='Fit only the first J curves of every subject.')
        parser.add_argument(
            '--store-spectrum', action='store_true',
            help='Keep the marginal spectral density in the model file.',
        )

    def config_overrides(self, options):
        if options.get('K') is not None:
            return {'selection.K': options['K']}
        return {}

    def run(self, *args, **options):
        config = self.load_config(options)
        obs = read_observations(options['observations'])
        if options.get('J'):
            obs = obs.head(options['J'])
        model = fit_model(obs, config, store_spectrum=options['store_spectrum'])
        save_model(model, options['out'], config)
        norms = ', '.join(f'{value:.4f}' for value in model.diagnostics['filter_norms'])
        self.stdout.write(f'K={model.K} L={",".join(str(L) for L in model.L)} h_max={model.h_max}')
        self.stdout.write(f'filter norms: {norms}')
        self.stdout.write(
            'noise variances: ' + ', '.join(f'{value:.4g}' for value in model.noise_variances)
        )
