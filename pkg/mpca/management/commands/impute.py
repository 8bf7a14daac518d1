from ...artifact import load_model
from ...io import write_curves
from ...tasks import impute
from ..base import MpcaCommand


class Command(MpcaCommand):
    help = 'Write reconstructed curves of a fitted model as CSV.'

    def add_command_arguments(self, parser):
        parser.add_argument('model', help='Model file written by fit.')
        parser.add_argument('--out', required=True, help='Curve CSV to write.')

    def run(self, *args, **options):
        model = load_model(options['model'])
        curves = impute(model)
        write_curves(curves, model.tgrid, options['out'])
        self.stdout.write(f'{curves.shape[0]} x {curves.shape[1]} curves written to {options["out"]}')
