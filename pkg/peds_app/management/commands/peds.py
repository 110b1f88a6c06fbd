from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from peds_app.config import dump_config, load_section, parse_overrides
from peds_app.exceptions import PedsError
from peds_app.scenarios import SCENARIOS, scenario_jacobians
from peds_app.verification import run_verify

EXIT_CONFIG = 1
EXIT_PROPERTY_FAILURE = 2

# CLI flags that map one to one onto config keys
FLAG_KEYS = ('n', 'alpha', 'dt', 'steps', 'seed', 'output')


class Command(BaseCommand):
    help = 'Run projective-embedding scenarios, Jacobian reports and the property suite.'

    def add_arguments(self, parser):
        verbs = parser.add_subparsers(dest='verb', required=True)

        run = verbs.add_parser('run', help='Run a scenario and write its CSV artifacts.')
        run.add_argument('scenario', choices=sorted(SCENARIOS))
        self._add_config_arguments(run)
        run.add_argument('--projector-file', dest='projector_file', help='Read the projector from a text file.')

        jacobian = verbs.add_parser('jacobian', help='Closed-form Jacobian reports at the fixed points of a scenario.')
        jacobian.add_argument('scenario', choices=sorted(SCENARIOS))
        jacobian.add_argument('--at', nargs='+', type=float, metavar='X', help='Evaluate at this point only.')
        self._add_config_arguments(jacobian)

        verify = verbs.add_parser('verify', help='Run the property suite.')
        verify.add_argument('--config', help='INI file with a [verify] section.')
        verify.add_argument('--alpha', type=float, help='Decay rate for the convergence property; 0 skips it.')
        verify.add_argument('--n', type=int)
        verify.add_argument('--dt', type=float)
        verify.add_argument('--seed', type=int)

        verbs.add_parser('dump-config', help='Print every section with its defaults.')

    def _add_config_arguments(self, parser):
        parser.add_argument('--config', help='INI file with one section per scenario.')
        parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE', help='Override a config key.')
        parser.add_argument('--n', type=int)
        parser.add_argument('--alpha', type=float)
        parser.add_argument('--dt', type=float)
        parser.add_argument('--steps', type=int)
        parser.add_argument('--seed', type=int)
        parser.add_argument('--output')

    def handle(self, *args, **options):
        verb = options['verb']
        try:
            if verb == 'dump-config':
                self.stdout.write(dump_config())
            elif verb == 'verify':
                self._verify(options)
            elif verb == 'jacobian':
                self._jacobian(options)
            else:
                self._run(options)
        except serializers.ValidationError as exc:
            raise CommandError(f'Invalid configuration: {exc.detail}', returncode=EXIT_CONFIG)
        except PedsError as exc:
            raise CommandError(f'{type(exc).__name__}: {exc}', returncode=exc.exit_code)

    def _overrides(self, options):
        overrides = parse_overrides(options.get('set'))
        for key in FLAG_KEYS:
            if options.get(key) is not None:
                overrides[key] = options[key]
        if options.get('projector_file'):
            overrides['projector_file'] = options['projector_file']
        return overrides

    def _run(self, options):
        name = options['scenario']
        cfg = load_section(name, options['config'], self._overrides(options))
        result = SCENARIOS[name](cfg)
        self._report(result)

    def _jacobian(self, options):
        name = options['scenario']
        cfg = load_section(name, options['config'], self._overrides(options))
        self._report(scenario_jacobians(name, cfg, at=options.get('at')))

    def _verify(self, options):
        cfg = load_section('verify', options['config'], self._overrides(options))
        results = run_verify(**cfg)
        for result in results:
            self.stdout.write(result.line())
        failed = [result.name for result in results if result.failed]
        if failed:
            raise CommandError(f'Failed properties: {", ".join(failed)}', returncode=EXIT_PROPERTY_FAILURE)
        self.stdout.write(self.style.SUCCESS(f'All {len(results)} properties passed or were skipped.'))

    def _report(self, result):
        for line in result.lines():
            self.stdout.write(line)
        failed = [check.name for check in result.checks if check.failed]
        if failed:
            raise CommandError(f'{result.name}: failed checks {", ".join(failed)}', returncode=EXIT_PROPERTY_FAILURE)
        self.stdout.write(self.style.SUCCESS(f'{result.name} finished: {len(result.artifacts)} artifact(s) written.'))
