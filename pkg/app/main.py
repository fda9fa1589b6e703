"""flowtopo command-line entry point."""

import logging
import sys
from typing import Optional

import click

from app.core.config import settings
from app.core.run_loader import ConfigError, parse_config
from app.models.run_config import RunMode
from app.repositories.run_repository import resolve_run_dir
from app.workers.job_runner import EXIT_USAGE, run_job

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s [%(levelname)s] %(name)s: %(message)s"


def configure_logging(verbose: bool) -> None:
    level = logging.DEBUG if verbose else getattr(logging, settings.LOG_LEVEL.upper(), logging.INFO)
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


@click.command(context_settings={"help_option_names": ["-h", "--help"]})
@click.argument("mode", type=click.Choice([mode.value for mode in RunMode]))
@click.option(
    "--config",
    "config_path",
    required=True,
    type=click.Path(dir_okay=False),
    help="JSON run configuration.",
)
@click.option("--out", "out_dir", default=None, help="Output directory (overrides the config).")
@click.option("--seed", type=click.IntRange(min=0), default=None, help="Seed for random test directions.")
@click.option("--verbose", is_flag=True, help="Log per-iteration diagnostics.")
@click.version_option(settings.VERSION, prog_name=settings.PROJECT_NAME)
def cli(mode: str, config_path: str, out_dir: Optional[str], seed: Optional[int], verbose: bool) -> None:
    """Phase-field topology optimization of stationary Navier-Stokes flow.

    MODE is one of solve, optimize, continue, verify-gradient, verify-shape
    or gamma-check.
    """

    configure_logging(verbose)
    try:
        config = parse_config(config_path, {"mode": mode, "seed": seed})
    except ConfigError as exc:
        click.echo(f"Error: {exc}", err=True)
        sys.exit(EXIT_USAGE)

    run_dir = resolve_run_dir(config, out_dir)
    code = run_job(config, run_dir)
    click.echo(str(run_dir))
    sys.exit(code)


def main() -> None:
    cli(prog_name=settings.PROJECT_NAME)


if __name__ == "__main__":
    main()
