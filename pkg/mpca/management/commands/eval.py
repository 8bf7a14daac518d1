from django.core.management.base import CommandError

from ...artifact import load_model, load_truth
from ...core import TimeGrid
from ...exceptions import DataError
from ...io import read_curves, read_observations
from ...tasks import impute, nmse, nmse_observed, nmspe
from ..base import MpcaCommand


class Command(MpcaCommand):
    help = 'Score a fitted model against simulated truth or held-out observations.'

    def add_command_arguments(self, parser):
        parser.add_argument('--model', help='Model file written by fit.')
        parser.add_argument('--truth', help='Truth file written by simulate.')
        parser.add_argument('--heldout', help='Observation CSV withheld from fitting.')
        parser.add_argument('--forecasts', help='Curve CSV written by forecast.')

    def run(self, *args, **options):
        if not (options.get('model') or options.get('forecasts')):
            raise CommandError('Give --model, --forecasts or both.', returncode=2)
        if options.get('model'):
            self.score_model(options)
        if options.get('forecasts'):
            self.score_forecasts(options)

    def score_model(self, options):
        model = load_model(options['model'])
        curves = impute(model)
        if options.get('truth'):
            truth = load_truth(options['truth'])
            if truth.n_curves < model.J or truth.cfg.p != model.p:
                raise DataError(f'{options["truth"]} does not cover the fitted panel')
            value = nmse(truth.curves_on(model.tgrid)[:, :model.J], curves, model.tgrid)
            self.stdout.write(f'nmse {value:.6g}')
        elif options.get('heldout'):
            heldout = read_observations(options['heldout'], model.p, model.J)
            value = nmse_observed(heldout, curves, model.tgrid, model.means)
            self.stdout.write(f'nmse_observed {value:.6g}')
        else:
            raise CommandError('--model needs --truth or --heldout.', returncode=2)

    def score_forecasts(self, options):
        if not options.get('truth'):
            raise CommandError('--forecasts needs --truth.', returncode=2)
        forecasts, points, first = read_curves(options['forecasts'])
        truth = load_truth(options['truth'])
        start, stop = first - 1, first - 1 + forecasts.shape[1]
        if stop > truth.n_curves or forecasts.shape[0] != truth.cfg.p:
            raise DataError(f'{options["truth"]} has no curves {first}..{stop} for every subject')
        grid = TimeGrid(points)
        value = nmspe(truth.curves_on(grid)[:, start:stop], forecasts, grid)
        self.stdout.write(f'nmspe {value:.6g}')
