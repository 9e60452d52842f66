"""Command line entry point: ``python -m tamis {run,verify,plot,report}``.

Exit codes: 0 success, 1 run or check failure, 2 invalid configuration.
"""
import logging
import os
import sys
from dataclasses import replace

import click

from .exceptions import ConfigurationError, TamisError
from .models.config import ExperimentConfig
from .services import experiment_service, report_service, verify_service
from .settings import configure_logging, load_settings

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


@click.group()
@click.option('--log-level', default=None, help='Overrides TAMIS_LOG_LEVEL.')
@click.pass_context
def cli(ctx, log_level):
    """Tempered anti-truncated adaptive importance sampling experiments"""
    settings = load_settings()
    configure_logging((log_level or settings.log_level).upper())
    ctx.obj = settings


@cli.command()
@click.argument('config_path', type=click.Path(dir_okay=False))
@click.option('--out', 'out_dir', default=None, help='Experiment directory (overrides the config).')
@click.option('--workers', type=int, default=None, help='Parallel replicates (overrides TAMIS_WORKERS).')
@click.option('--seed', type=int, default=None, help='Base seed (overrides the config).')
@click.option('--dump-particles', is_flag=True,
              help="Also write every recycled particle and each stage's proposal per run.")
@click.option('--report', 'with_report', is_flag=True, help='Build report.pdf after the runs.')
@click.pass_obj
def run(settings, config_path, out_dir, workers, seed, dump_particles, with_report):
    """Run every replicate of the experiment in CONFIG_PATH"""
    try:
        cfg = ExperimentConfig.load(config_path)
        if seed is not None:
            cfg = replace(cfg, seed=seed)
    except ConfigurationError as exc:
        click.echo(f"invalid configuration: {exc}", err=True)
        sys.exit(EXIT_CONFIG)

    out_dir = out_dir or cfg.raw.get('output_dir') or settings.output_dir
    try:
        outcome = experiment_service.run_experiment(
            cfg,
            output_dir=out_dir,
            workers=workers or settings.workers,
            dump_particles=dump_particles,
            report=with_report,
            blackbox_timeout=settings.blackbox_timeout,
        )
    except ConfigurationError as exc:
        click.echo(f"invalid configuration: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except TamisError as exc:
        click.echo(f"experiment failed: {exc}", err=True)
        sys.exit(EXIT_FAILURE)

    click.echo(f"wrote {outcome.aggregate_path}")
    if outcome.report_path:
        click.echo(f"wrote {outcome.report_path}")
    if outcome.failed:
        click.echo(f"{outcome.failed} of {len(outcome.rows)} run(s) failed", err=True)
        sys.exit(EXIT_FAILURE)


@cli.command()
def verify():
    """Run the quadrature and property checks and print one row per check"""
    rows = verify_service.verify()
    click.echo(verify_service.format_table(rows))
    failed = [row for row in rows if not row.passed]
    if failed:
        click.echo(f"{len(failed)} check(s) failed", err=True)
        sys.exit(EXIT_FAILURE)


@cli.command()
@click.argument('trace_path', type=click.Path(exists=True, dir_okay=False))
@click.option('--out', 'out_path', default=None, help='SVG path (default: next to the trace).')
def plot(trace_path, out_path):
    """Draw the β and KL-hat traces of TRACE_PATH as SVG"""
    try:
        trace = report_service.read_trace_csv(trace_path)
    except (OSError, ValueError) as exc:
        click.echo(f"cannot read trace: {exc}", err=True)
        sys.exit(EXIT_FAILURE)
    out_path = out_path or os.path.splitext(trace_path)[0] + '.svg'
    report_service.render_trace_svg(trace, out_path, title=os.path.basename(trace_path))
    click.echo(f"wrote {out_path}")


@cli.command()
@click.argument('experiment_dir', type=click.Path(exists=True, file_okay=False))
def report(experiment_dir):
    """Build report.pdf for an experiment directory"""
    try:
        path = experiment_service.build_report(experiment_dir)
    except (TamisError, OSError, ValueError) as exc:
        click.echo(f"report failed: {exc}", err=True)
        sys.exit(EXIT_FAILURE)
    click.echo(f"wrote {path}")


def main():
    cli(prog_name='tamis')
