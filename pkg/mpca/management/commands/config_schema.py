import json

from ...conf import config_schema
from ..base import MpcaCommand


class Command(MpcaCommand):
    help = 'Print the JSON schema of the run configuration.'

    def add_command_arguments(self, parser):
        parser.add_argument('--out', help='Write the schema here instead of stdout.')

    def run(self, *args, **options):
        text = json.dumps(config_schema(), indent=2)
        if options.get('out'):
            with open(options['out'], 'w', encoding='utf-8') as handle:
                handle.write(text + '\n')
            self.stdout.write(f'schema written to {options["out"]}')
        else:
            self.stdout.write(text)
