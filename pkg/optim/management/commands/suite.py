from django.core.management.base import BaseCommand, CommandError

from optim.exceptions import OptimError
from optim.experiments import SUITES, experiment_suite


class Command(BaseCommand):
    help = "Run a fixed-seed experiment suite and write its traces and summary.csv"

    def add_arguments(self, parser):
        parser.add_argument('name', choices=SUITES)
        parser.add_argument('--out', required=True, help='Output directory')
        parser.add_argument('--data', help='Path to the a3a libsvm file (logistic_graphs only)')
        parser.add_argument('--jobs', type=int, default=None, help='Worker processes')

    def handle(self, *args, **options):
        jobs = options['jobs']
        if jobs is not None and jobs < 1:
            raise CommandError("--jobs must be at least 1", returncode=3)

        self.stdout.write(f"📊 Running suite {options['name']}...")
        try:
            result = experiment_suite(options['name'], options['out'], options['data'], jobs)
        except OptimError as e:
            raise CommandError(str(e), returncode=3)

        for row in result.rows:
            self.stdout.write('  ' + ' '.join(f"{k}={v}" for k, v in row.items() if k != 'trace'))
        self.stdout.write(self.style.SUCCESS(
            f"✅ {len(result.traces)} traces, summary at {result.summary}"
        ))
