import sys
from dataclasses import replace

from django.core.management.base import BaseCommand, CommandError

from optim.exceptions import ConfigError, OptimError, TuningError
from optim.harness import run
from optim.serializers import load_run_config

EXIT_CODES = {'converged': 0, 'diverged': 1, 'budget_exhausted': 2}
CONFIG_ERROR = 3


class Command(BaseCommand):
    help = "Run one decentralized optimization experiment from a JSON config and write its CSV trace"

    def add_arguments(self, parser):
        parser.add_argument('--config', required=True, help='Path to the JSON run config')
        parser.add_argument('--output', help='CSV path, overrides "output" in the config')

    def handle(self, *args, **options):
        try:
            config = load_run_config(options['config'])
        except ConfigError as e:
            raise CommandError(str(e), returncode=CONFIG_ERROR)
        if options['output']:
            config = replace(config, output=options['output'])

        self.stdout.write(f"🚀 {config.name}: {config.algorithm.name} on {config.graph.kind} (m={config.graph.m})")
        try:
            trace = run(config)
        except TuningError as e:
            self.stderr.write(f"❌ {e}")
            sys.exit(EXIT_CODES['diverged'])
        except OptimError as e:
            raise CommandError(str(e), returncode=CONFIG_ERROR)

        final = trace.final
        summary = (
            f"{trace.status}: k={final.k} vector_rounds={final.vector_rounds} "
            f"scalar_rounds={final.scalar_rounds} err_rel={final.err_rel:.3e} ({trace.wall_clock:.2f}s)"
        )
        if config.output:
            summary += f" -> {config.output}"

        if trace.status == 'converged':
            self.stdout.write(self.style.SUCCESS(f"✅ {summary}"))
            return
        self.stderr.write(f"⚠️ {summary}")
        sys.exit(EXIT_CODES[trace.status])
