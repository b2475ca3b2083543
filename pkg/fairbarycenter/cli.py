"""Command-line interface for fairbarycenter."""

import logging
import sys
from pathlib import Path
from typing import List, NoReturn, Optional

import click
import yaml
from pydantic import ValidationError

from .config import DEFAULT_ALPHAS, AppConfig, Mode, Notion, RunConfig
from .errors import FairBarycenterError
from .pipeline import run_evaluate, run_fit, run_sweep, run_synth, run_transform
from .synthetic import SCENARIOS


def setup_logging(config: AppConfig) -> None:
    """Setup logging configuration."""
    import logging.handlers

    # Clear any existing handlers
    logging.getLogger().handlers.clear()

    formatter = logging.Formatter(config.logging.format)

    # stdout carries command output, logs go to stderr
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logging.getLogger().addHandler(console_handler)

    if config.logging.file:
        log_file = Path(config.logging.file).expanduser()
        log_file.parent.mkdir(parents=True, exist_ok=True)

        if config.logging.max_size and config.logging.backup_count:
            file_handler: logging.Handler = logging.handlers.RotatingFileHandler(
                log_file,
                maxBytes=config.logging.max_size * 1024 * 1024,  # Convert MB to bytes
                backupCount=config.logging.backup_count,
                encoding='utf-8'
            )
        else:
            file_handler = logging.FileHandler(log_file, encoding='utf-8')

        file_handler.setFormatter(formatter)
        logging.getLogger().addHandler(file_handler)

    logging.getLogger().setLevel(getattr(logging, config.logging.level))


def load_app_config(config: Optional[Path], verbose: bool) -> AppConfig:
    """Load configuration and set up logging for a command."""
    config_path = str(config) if config else None
    app_config = AppConfig.load_config(config_path)
    if verbose:
        app_config.logging.level = "DEBUG"
    setup_logging(app_config)
    return app_config


def fail(e: Exception) -> NoReturn:
    """Report an error on stderr and exit with its code."""
    if isinstance(e, FairBarycenterError):
        click.echo(f"Error: {e}", err=True)
        sys.exit(e.exit_code)
    if isinstance(e, (FileNotFoundError, ValidationError)):
        click.echo(f"Error: {e}", err=True)
        sys.exit(2)
    click.echo(f"Unexpected error: {e}", err=True)
    sys.exit(1)


def parse_alphas(ctx: click.Context, param: click.Parameter, value: Optional[str]) -> List[float]:
    """Parse a comma-separated alpha grid."""
    if value is None:
        return list(DEFAULT_ALPHAS)
    try:
        return [float(part) for part in value.split(",") if part.strip()]
    except ValueError:
        raise click.BadParameter(f"Expected a comma-separated list of numbers, got {value!r}")


def parse_notion(ctx: click.Context, param: click.Parameter, value: str) -> Notion:
    try:
        return Notion.parse(value)
    except (ValueError, ValidationError) as e:
        raise click.BadParameter(str(e))


config_option = click.option(
    '--config', '-c',
    type=click.Path(path_type=Path),
    help='Configuration file path (YAML). Defaults to ~/.config/fairbarycenter/config.yaml'
)
verbose_option = click.option('--verbose', '-v', is_flag=True, help='Enable verbose logging')
bandwidth_option = click.option('--h', 'bandwidth', type=float, help='Kernel bandwidth for out-of-sample records')
oracle_cap_option = click.option(
    '--oracle-cap', type=int, help='Largest tuple count for the exact barycenter (default from config)'
)


@click.group()
@click.version_option()
def cli():
    """fairbarycenter - Fair post-processing by transport to an approximate Wasserstein barycenter."""
    pass


@cli.command()
@click.option('--input', 'input_path', required=True, type=click.Path(path_type=Path), help='Training CSV')
@click.option('--model', 'model_path', required=True, type=click.Path(path_type=Path), help='Model document to write')
@click.option(
    '--mode',
    type=click.Choice([m.value for m in Mode]),
    default=Mode.BARYCENTRIC.value,
    show_default=True,
    help='How transport targets are materialised'
)
@click.option('--seed', type=int, default=0, show_default=True, help='Seed for the stochastic mode')
@bandwidth_option
@click.option(
    '--notion',
    default='plain',
    show_default=True,
    callback=parse_notion,
    help='plain, odds or opportunity:<y>'
)
@config_option
@verbose_option
def fit(
    input_path: Path,
    model_path: Path,
    mode: str,
    seed: int,
    bandwidth: Optional[float],
    notion: Notion,
    config: Optional[Path],
    verbose: bool,
):
    """Fit a post-processor on training outputs and save it."""
    try:
        app_config = load_app_config(config, verbose)
        run_config = RunConfig(
            input=input_path, model=model_path, mode=Mode(mode), seed=seed, bandwidth=bandwidth, notion=notion
        )
        run = run_fit(run_config, app_config)

        for summary in run.summaries:
            if summary.label is not None:
                click.echo(f"Label {summary.label}:")
            for group, size in summary.group_sizes.items():
                click.echo(f"  Group '{group}': n={size}, p={summary.group_weights[group]!r}")
            click.echo(f"  Psi(approximate barycenter) = {summary.psi!r}")
        click.echo(f"Model written to {model_path} in {run.wall_time:.3f}s")
    except Exception as e:
        fail(e)


@cli.command()
@click.option('--input', 'input_path', required=True, type=click.Path(path_type=Path), help='CSV to post-process')
@click.option('--model', 'model_path', required=True, type=click.Path(path_type=Path), help='Fitted model document')
@click.option('--output', 'output_path', required=True, type=click.Path(path_type=Path), help='Processed CSV to write')
@click.option('--alpha', type=float, default=0.0, show_default=True, help='Interpolation weight in [0, 1]')
@bandwidth_option
@config_option
@verbose_option
def transform(
    input_path: Path,
    model_path: Path,
    output_path: Path,
    alpha: float,
    bandwidth: Optional[float],
    config: Optional[Path],
    verbose: bool,
):
    """Post-process model outputs with a fitted model."""
    try:
        app_config = load_app_config(config, verbose)
        run_config = RunConfig(
            input=input_path, model=model_path, output=output_path, alpha=alpha, bandwidth=bandwidth
        )
        result = run_transform(run_config, app_config)
        in_sample = int(result["in_sample"].sum())
        click.echo(f"Wrote {result.shape[0]} records to {output_path} ({in_sample} in-sample)")
    except Exception as e:
        fail(e)


@cli.command()
@click.option('--input', 'input_path', required=True, type=click.Path(path_type=Path), help='Original CSV')
@click.option('--processed', 'processed_path', required=True, type=click.Path(path_type=Path), help='Processed CSV')
@click.option('--output', 'output_path', type=click.Path(path_type=Path), help='Report to write (YAML); stdout if omitted')
@click.option('--alpha', type=float, default=0.0, show_default=True, help='Alpha the processed file was made with')
@oracle_cap_option
@config_option
@verbose_option
def evaluate(
    input_path: Path,
    processed_path: Path,
    output_path: Optional[Path],
    alpha: float,
    oracle_cap: Optional[int],
    config: Optional[Path],
    verbose: bool,
):
    """Measure unfairness and error of processed outputs."""
    try:
        app_config = load_app_config(config, verbose)
        run_config = RunConfig(
            output=output_path,
            alpha=alpha,
            oracle_cap=oracle_cap or app_config.solver.oracle_cap,
        )
        report = run_evaluate(input_path, processed_path, run_config, app_config)
        if output_path is None:
            click.echo(yaml.safe_dump({"reports": [report.model_dump(mode="json")]}, sort_keys=False), nl=False)
        else:
            click.echo(f"U={report.unfairness_U!r} ({report.anchor}), R={report.error_R!r}")
    except Exception as e:
        fail(e)


@cli.command()
@click.option('--input', 'input_path', required=True, type=click.Path(path_type=Path), help='Evaluation CSV')
@click.option('--model', 'model_path', required=True, type=click.Path(path_type=Path), help='Fitted model document')
@click.option('--output', 'output_path', required=True, type=click.Path(path_type=Path), help='Pareto CSV to write')
@click.option('--alphas', callback=parse_alphas, help='Comma-separated alpha grid (default 0,0.2,...,1)')
@bandwidth_option
@oracle_cap_option
@click.option('--baseline', is_flag=True, help='Append a row for the per-coordinate quantile baseline')
@config_option
@verbose_option
def sweep(
    input_path: Path,
    model_path: Path,
    output_path: Path,
    alphas: List[float],
    bandwidth: Optional[float],
    oracle_cap: Optional[int],
    baseline: bool,
    config: Optional[Path],
    verbose: bool,
):
    """Trace the unfairness/error trade-off over an alpha grid."""
    try:
        app_config = load_app_config(config, verbose)
        run_config = RunConfig(
            input=input_path,
            model=model_path,
            output=output_path,
            alphas=alphas,
            bandwidth=bandwidth,
            oracle_cap=oracle_cap or app_config.solver.oracle_cap,
            baseline=baseline,
        )
        frame = run_sweep(run_config, app_config)
        click.echo(f"Wrote {frame.shape[0]} Pareto rows to {output_path}")
    except Exception as e:
        fail(e)


@cli.command()
@click.option('--scenario', type=click.Choice(sorted(SCENARIOS)), default='figure1', show_default=True)
@click.option('--n', 'n', type=int, default=500, show_default=True, help='Records per group')
@click.option('--seed', type=int, default=0, show_default=True, help='Random seed')
@click.option('--output', 'output_path', required=True, type=click.Path(path_type=Path), help='CSV to write')
@config_option
@verbose_option
def synth(scenario: str, n: int, seed: int, output_path: Path, config: Optional[Path], verbose: bool):
    """Generate a synthetic grouped dataset."""
    try:
        load_app_config(config, verbose)
        frame = run_synth(scenario, n, seed, output_path)
        click.echo(f"Wrote {frame.shape[0]} records to {output_path}")
    except Exception as e:
        fail(e)


if __name__ == '__main__':
    cli()
