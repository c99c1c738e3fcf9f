"""
Command-line entry point: ``python -m mswt.main <command>``.

Errors raised by the pipeline are turned into exit codes here, in one place:
validation 2, numerical instability 3, file and I/O problems 4.
"""

import logging
import sys

import click

from mswt import __version__, configure_logging
from mswt.commands.data import generate_data
from mswt.commands.evaluate import climatology_command, evaluate, evaluate_set, spectrum
from mswt.commands.train import rollout_command, train
from mswt.errors import MSWTError

logger = logging.getLogger(__name__)

IO_EXIT_CODE = 4


class PipelineGroup(click.Group):
    """Click group that maps pipeline exceptions to exit codes."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except MSWTError as exc:
            logger.error(f"{type(exc).__name__}: {exc}")
            ctx.exit(exc.exit_code)
        except OSError as exc:
            logger.error(f"I/O error: {exc}")
            ctx.exit(IO_EXIT_CODE)


@click.group(cls=PipelineGroup)
@click.version_option(__version__, prog_name="mswt")
@click.option("--log-level", default=None, help="Logging level (default: MSWT_LOG_LEVEL or INFO).")
def cli(log_level):
    """Multi-scale wavelet transformer: generate data, train, roll out and evaluate."""
    configure_logging(log_level)


cli.add_command(generate_data)
cli.add_command(train)
cli.add_command(rollout_command)
cli.add_command(evaluate)
cli.add_command(evaluate_set)
cli.add_command(spectrum)
cli.add_command(climatology_command)


if __name__ == "__main__":
    sys.exit(cli())
