from ...artifact import load_model
from ...conf import AUTO
from ...io import write_curves
from ...tasks import fit_score_vars, forecast
from ..base import MpcaCommand


class Command(MpcaCommand):
    help = 'Forecast the next curves of a fitted model from VAR score fits.'

    def add_command_arguments(self, parser):
        parser.add_argument('model', help='Model file written by fit.')
        parser.add_argument('--horizon', type=int, help='Number of curves to forecast.')
        parser.add_argument('--out', required=True, help='Curve CSV to write.')

    def config_overrides(self, options):
        if options.get('horizon') is not None:
            return {'forecast.horizon': options['horizon']}
        return {}

    def run(self, *args, **options):
        config = self.load_config(options)
        horizon = config.forecast['horizon']
        P_max = config.forecast['P_max']
        model = load_model(options['model'])
        var_fits = fit_score_vars(model, None if P_max == AUTO else P_max)
        curves = forecast(model, var_fits, horizon)
        write_curves(curves, model.tgrid, options['out'], first_curve=model.J + 1)
        orders = ', '.join(str(fit.order) for fit in var_fits)
        self.stdout.write(f'VAR orders {orders}; {horizon} curves per subject written to {options["out"]}')
