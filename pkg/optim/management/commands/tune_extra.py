from django.core.management.base import BaseCommand, CommandError

from optim.exceptions import ConfigError, OptimError, TuningError
from optim.harness import tune_extra
from optim.serializers import load_run_config


class Command(BaseCommand):
    help = "Grid-search the EXTRA stepsize for a run config and write the best trace"

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Path to the JSON run config')
        parser.add_argument('--output', help='CSV path for the best trace')

    def handle(self, *args, **options):
        try:
            config = load_run_config(options['config'])
        except ConfigError as e:
            raise CommandError(str(e), returncode=3)
        output = options['output'] or config.output

        try:
            result = tune_extra(config)
        except TuningError as e:
            for alpha, status in e.statuses.items():
                self.stderr.write(f"  alpha={alpha:.3e} {status}")
            raise CommandError(str(e), returncode=1)
        except OptimError as e:
            raise CommandError(str(e), returncode=3)

        for alpha, status in sorted(result.statuses.items()):
            marker = ' *' if alpha == result.alpha else ''
            self.stdout.write(f"  alpha={alpha:.3e} {status}{marker}")
        if output:
            result.trace.to_csv(output)
        self.stdout.write(self.style.SUCCESS(
            f"✅ best alpha={result.alpha:.6g} with {result.trace.vector_rounds} vector rounds"
        ))
