# standard libraries
import logging
# third party libraries
from django.core.exceptions import ValidationError
from django.core.management.base import BaseCommand, CommandError
# local libraries
from ..conf import load_config, parse_value
from ..exceptions import MpcaError

VERBOSITY_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG, 3: logging.DEBUG}


def format_validation_error(error: ValidationError) -> str:
    if hasattr(error, 'error_dict'):
        return '; '.join(
            f'{key}: {" ".join(messages)}' for key, messages in sorted(error.message_dict.items())
        )
    return ' '.join(error.messages)


class MpcaCommand(BaseCommand):
    """Common options and exit codes for the spectral MPCA commands.

    Exit codes: 2 for configuration and argument errors, 3 for data and
    model files, 4 for numerical failures.
    """

    def add_arguments(self, parser):
        parser.add_argument('--config', help='JSON run configuration file.')
        parser.add_argument('--seed', type=int, help='Seed for every random draw.')
        parser.add_argument('--threads', type=int, help='Worker threads (default: all cores).')
        parser.add_argument(
            '--set', action='append', default=[], metavar='SECTION.KEY=VALUE',
            help='Override one configuration value; may be repeated.',
        )
        self.add_command_arguments(parser)

    def add_command_arguments(self, parser):
        pass

    def config_overrides(self, options):
        """Flag values mapped to ``section.key`` overrides."""
        return {}

    def load_config(self, options, defaults=None):
        overrides = {}
        for item in options.get('set') or []:
            if '=' not in item:
                raise ValidationError({'set': [f'Expected SECTION.KEY=VALUE, got {item!r}.']})
            key, value = item.split('=', 1)
            overrides[key.strip()] = parse_value(value)
        if options.get('seed') is not None:
            overrides['seed'] = options['seed']
        if options.get('threads') is not None:
            overrides['threads'] = options['threads']
        overrides.update(self.config_overrides(options))
        return load_config(options.get('config'), overrides, defaults)

    def handle(self, *args, **options):
        logging.getLogger('mpca').setLevel(VERBOSITY_LEVELS.get(options.get('verbosity', 1), logging.INFO))
        try:
            self.run(*args, **options)
        except ValidationError as exc:
            raise CommandError(format_validation_error(exc), returncode=2)
        except MpcaError as exc:
            raise CommandError(str(exc), returncode=exc.exit_code)

    def run(self, *args, **options):
        raise NotImplementedError('subclasses of MpcaCommand must provide a run() method')
