"""
FRIS command line
=================
fris demo|case1|case2 --config <path> --seed <n> --out <dir> [--threads <k>]

Exit codes: 0 success, 2 configuration error, 3 runtime error.
"""
import logging
import sys
from pathlib import Path
from typing import Optional

import click

from fris import __version__
from fris.cli.config import (
    ExperimentConfig,
    ExperimentKind,
    RuntimeSettings,
    bundled_config,
    check_invariants,
    load_config,
)
from fris.cli.reporting import summarize, write_demo, write_experiment
from fris.cli.runners import run_case1, run_case2, run_demo_path_aware
from fris.errors import ConfigError, ConfigInvariantError

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def print_step(title: str) -> None:
    """Print a section banner"""
    click.echo(f"\n{'=' * 60}")
    click.echo(title)
    click.echo("=" * 60)


def _configure_logging(level: str) -> None:
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _prepare(kind: ExperimentKind, config_path: Optional[str], seed: Optional[int]) -> ExperimentConfig:
    config = load_config(config_path or bundled_config(kind))
    if config.experiment is not kind:
        raise ConfigInvariantError("experiment", f"config describes '{config.experiment.value}', not '{kind.value}'")
    if seed is not None:
        config = check_invariants(config.with_seeds((seed,)))
    return config


def experiment_options(func):
    """Options shared by every experiment command"""
    options = (
        click.option("--config", "config_path", type=click.Path(dir_okay=False),
                     help="Experiment file (YAML or JSON); defaults to the bundled one"),
        click.option("--seed", type=click.IntRange(min=0), help="Run this single seed instead of the configured list"),
        click.option("--out", "out_dir", type=click.Path(file_okay=False), help="Output directory"),
        click.option("--threads", type=click.IntRange(min=1), help="Worker threads (default FRIS_THREADS)"),
    )
    for option in reversed(options):
        func = option(func)
    return func


def _guarded(kind: ExperimentKind, body):
    """Run one command body and map failures onto exit codes"""
    ctx = click.get_current_context()
    try:
        body()
    except ConfigError as exc:
        click.echo(f"❌ Configuration error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    except Exception as exc:
        logger.debug("%s failed", kind.value, exc_info=True)
        click.echo(f"❌ {kind.value} failed: {exc}", err=True)
        ctx.exit(EXIT_RUNTIME)


@click.group()
@click.version_option(__version__, message="%(version)s")
@click.pass_context
def main(ctx):
    """Fluid reconfigurable intelligent surface experiments."""
    try:
        settings = RuntimeSettings.from_env()
    except ConfigError as exc:
        click.echo(f"❌ Configuration error: {exc}", err=True)
        ctx.exit(EXIT_CONFIG)
    _configure_logging(settings.log_level)
    ctx.obj = settings


def _output_dir(settings: RuntimeSettings, config: ExperimentConfig, out_dir: Optional[str]) -> Path:
    return Path(out_dir or settings.output_dir or config.output_dir)


@main.command()
@experiment_options
@click.pass_obj
def demo(settings: RuntimeSettings, config_path, seed, out_dir, threads):
    """Path-aware modulation demo on one channel per seed."""
    def body():
        config = _prepare(ExperimentKind.DEMO, config_path, seed)
        target = _output_dir(settings, config, out_dir)
        print_step("🎯 PATH-AWARE MODULATION DEMO")
        reports = []
        for s in config.seeds:
            report = run_demo_path_aware(config, s)
            reports.append(report)
            for name, mode in report.modes.items():
                click.echo(f"seed {s:>3}  {name:<26} power={mode.power:.6g}  "
                           f"spread={mode.phase_spread:.4f}  max-dev={mode.max_phase_deviation_deg:.2f}°")
        write_demo(reports, target)
        print_step(f"✅ DEMO COMPLETE → {target}")

    _guarded(ExperimentKind.DEMO, body)


def _experiment(kind: ExperimentKind, runner, settings: RuntimeSettings, config_path, seed, out_dir, threads):
    def body():
        config = _prepare(kind, config_path, seed)
        target = _output_dir(settings, config, out_dir)
        workers = threads or settings.threads
        print_step(f"📊 {kind.value.upper()}: {len(config.seeds)} seed(s), {workers} thread(s)")
        result = runner(config, threads=workers, progress=settings.progress)
        for row in summarize(result.records):
            click.echo(f"{row['grid']:>6}  M̂={row['active_count']:<4} {row['resolution']:<11} "
                       f"Nt={row['bs_antennas']:<3} {row['mode']:<22} median={row['median_objective']:.4f}")
        write_experiment(result, target)
        print_step(f"✅ {kind.value.upper()} COMPLETE → {target}")

    _guarded(kind, body)


@main.command()
@experiment_options
@click.pass_obj
def case1(settings: RuntimeSettings, config_path, seed, out_dir, threads):
    """Achievable rate of traditional RIS vs position FRIS (cross-entropy search)."""
    _experiment(ExperimentKind.CASE1, run_case1, settings, config_path, seed, out_dir, threads)


@main.command()
@experiment_options
@click.pass_obj
def case2(settings: RuntimeSettings, config_path, seed, out_dir, threads):
    """Weighted sum rate of pattern FRIS vs fixed-pattern baselines."""
    _experiment(ExperimentKind.CASE2, run_case2, settings, config_path, seed, out_dir, threads)


__all__ = ["main", "print_step"]
