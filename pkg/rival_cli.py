import logging
import os
import sys
from pathlib import Path

import click
import numpy as np
from dotenv import load_dotenv
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from allocation import FoxCriterion
from binned_measure import load_measure
from binning import GridSpec, optimize_bins
from errors import ConfigurationError, RivalSamplingError
from estimators import extent_squared, grassberger_batch_error, miller_madow
from experiment_config import load_config
from harness import emit_results, run_experiment, sweep_minima, write_sweep
from samplers import (
    ChangepointModel,
    ChangepointSampler,
    batch_means_standard_error,
    read_events,
    simulate_poisson_process,
    write_events,
    write_samples,
)
from strategy_roster import display_name

BASE_DIR = Path(__file__).resolve().parent
load_dotenv(BASE_DIR / ".env")

logger = logging.getLogger(__name__)
console = Console()

CONFIG_EXIT = 2
FAILURE_EXIT = 1
CRITERIA = ("grassberger", "miller-madow", "fox", "extent")


def configure_logging(level: str = None):
    level = (level or os.getenv("RIVAL_LOG_LEVEL") or "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def fail(e: Exception):
    """Prints the error and exits 2 for configuration problems, 1 otherwise"""
    if isinstance(e, ConfigurationError):
        console.print(f"[bold red]❌ Configuration error: {e}[/bold red]")
        sys.exit(CONFIG_EXIT)
    logger.error(f"Command failed: {e}", exc_info=True)
    console.print(f"[bold red]❌ Error: {e}[/bold red]")
    sys.exit(FAILURE_EXIT)


@click.group()
@click.option("--log-level", default=None, help="Logging level (default: $RIVAL_LOG_LEVEL or WARNING)")
def cli(log_level):
    """Rival samplers - split a sampling budget across samplers by estimated divergence error"""
    configure_logging(log_level)


@cli.command(name="run-experiment")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", default="./results", help="Directory for summary.csv and sizes.csv")
@click.option("--workers", type=int, default=None, help="Parallel replications (default: $RIVAL_WORKERS or CPU count)")
@click.option("--dump-measures", is_flag=True, help="Also write the pooled measure of every strategy and target")
def run_experiment_command(config, out_dir, workers, dump_measures):
    """Run every strategy of an experiment config over its replications"""
    try:
        experiment = load_config(config)
        console.print(f"\n[bold blue]🏁 Running {experiment.name} ({experiment.replications} replications)...[/bold blue]")
        result = run_experiment(experiment, workers=workers)
        written = emit_results(result, out_dir, dump_measures=dump_measures)
    except Exception as e:
        fail(e)

    rankings = Table(show_header=True, header_style="bold magenta")
    rankings.add_column("Strategy", style="dim")
    for target in result.target_names:
        rankings.add_column(f"n {target}")
        rankings.add_column(f"e_KL {target}")
    rankings.add_column(f"Loss ({result.loss})")
    rankings.add_column("Rank")

    ranked = sorted(result.strategies, key=result.realized_loss)
    for rank, strategy in enumerate(ranked, 1):
        cells = []
        for mean_n, ekl in zip(result.mean_sizes(strategy), result.ekl[strategy]):
            cells += [f"{mean_n:.1f}", f"{ekl:.4e}"]
        rankings.add_row(display_name(strategy), *cells, f"{result.realized_loss(strategy):.4e}", f"#{rank}")

    console.print(rankings)
    console.print(f"\n[bold green]✅ Wrote {len(written)} files to {out_dir}[/bold green]")


@cli.command(name="bin-width")
@click.argument("data", type=click.Path(exists=True, dir_okay=False))
@click.option("--min", "low", type=float, required=True, help="Left end of the binned range")
@click.option("--max", "high", type=float, required=True, help="Right end of the binned range")
@click.option("--k-min", type=int, default=1, help="Smallest bin count to try")
@click.option("--k-max", type=int, default=200, help="Largest bin count to try")
def bin_width(data, low, high, k_min, k_max):
    """Pick the bin count maximizing the histogram marginal likelihood of a data file"""
    try:
        values = np.loadtxt(data, dtype=float, ndmin=1)
        if not low < high:
            raise ConfigurationError(f"--min must be below --max, got [{low}, {high}]")
        inside = values[(values >= low) & (values <= high)]
        if inside.size < values.size:
            logger.warning(f"Dropped {values.size - inside.size} values outside [{low}, {high}]")
        if inside.size == 0:
            raise ConfigurationError(f"no data values inside [{low}, {high}]")
        K_hat, alpha_hat, log_ml = optimize_bins(inside, low, high, (k_min, k_max))
    except Exception as e:
        fail(e)
    click.echo(f"{K_hat} {alpha_hat!r} {log_ml!r}")


@cli.command(name="estimate")
@click.argument("dump", type=click.Path(exists=True, dir_okay=False))
@click.option("--criterion", type=click.Choice(CRITERIA), default="grassberger", help="Error estimate to report")
@click.option("--delta", type=float, default=0.05, help="Confidence parameter of the chi-square bound")
def estimate(dump, criterion, delta):
    """Estimate the Monte Carlo divergence error of a dumped measure"""
    try:
        measure = load_measure(dump)
        if measure.n == 0:
            raise ConfigurationError(f"measure dump {dump} holds no samples")
        if criterion == "grassberger":
            value = grassberger_batch_error(measure)
        elif criterion == "miller-madow":
            value = miller_madow(measure)
        elif criterion == "fox":
            value = FoxCriterion(delta=delta).bound(measure.K, measure.n)
        else:
            value = extent_squared(measure) / measure.n
    except Exception as e:
        fail(e)
    click.echo(repr(value))


@cli.command(name="simulate-events")
@click.option("--breaks", default="", help="Comma-separated changepoints inside (0, 1)")
@click.option("--levels", required=True, help="Comma-separated intensities, one more than breaks")
@click.option("--seed", type=int, default=0, help="Random seed")
@click.option("--out", "out_path", required=True, help="Event file to write")
def simulate_events(breaks, levels, seed, out_path):
    """Simulate a piecewise-constant Poisson process on [0, 1]"""
    try:
        break_values = [float(b) for b in breaks.split(",") if b.strip()]
        level_values = [float(v) for v in levels.split(",") if v.strip()]
        data = simulate_poisson_process(break_values, level_values, np.random.default_rng(seed))
        write_events(data, out_path)
    except ValueError as e:
        fail(e if isinstance(e, RivalSamplingError) else ConfigurationError(str(e)))
    except Exception as e:
        fail(e)
    console.print(f"[bold green]✅ Wrote {len(data)} events to {out_path}[/bold green]")


@cli.command(name="sample-changepoints")
@click.argument("events", type=click.Path(exists=True, dir_okay=False))
@click.option("--samples", type=int, default=1000, help="Number of thinned draws")
@click.option("--thin", type=int, default=50, help="Chain steps per draw")
@click.option("--nu", type=float, default=1.0, help="Prior mean number of changepoints")
@click.option("--gamma-shape", type=float, default=1.0, help="Shape of the intensity prior")
@click.option("--gamma-rate", type=float, default=None, help="Rate of the intensity prior (default: shape / event count)")
@click.option("--seed", type=int, default=0, help="Random seed")
@click.option("--out", "out_path", required=True, help="Sample dump to write")
def sample_changepoints(events, samples, thin, nu, gamma_shape, gamma_rate, seed, out_path):
    """Run the changepoint sampler on an event file and dump its draws"""
    try:
        if samples < 1:
            raise ConfigurationError(f"--samples must be positive, got {samples}")
        data = read_events(events)
        if gamma_rate is None:
            model = ChangepointModel.for_data(data, nu=nu, gamma_shape=gamma_shape)
        else:
            model = ChangepointModel(nu=nu, gamma_shape=gamma_shape, gamma_rate=gamma_rate)
        sampler = ChangepointSampler(
            model=model, data=data, grid=GridSpec(0.0, 1.0, 1, tails=False), rng=np.random.default_rng(seed), thin=thin
        )
        draws = [sampler.draw() for _ in range(samples)]
        write_samples(draws, out_path)
    except Exception as e:
        fail(e)

    ks = np.array([d.k for d in draws])
    lines = []
    for k, c in enumerate(np.bincount(ks)):
        if not c:
            continue
        line = f"k={k}: {c / samples:.3f}"
        if samples >= 2:
            line += f" ± {batch_means_standard_error(ks == k):.3f}"
        lines.append(line)
    summary = "\n".join(lines)
    console.print(
        Panel(
            summary,
            title="[bold green]📊 Posterior number of changepoints",
            subtitle=f"acceptance {sampler.acceptance_rate:.3f}",
            border_style="green",
        )
    )


@cli.command(name="sweep-minima")
@click.argument("config", type=click.Path(exists=True, dir_okay=False))
@click.option("--minima", "minima_values", required=True, help="Comma-separated minimum sample counts to try")
@click.option("--out", "out_dir", default="./results", help="Directory for sweep.csv")
@click.option("--workers", type=int, default=None, help="Parallel replications")
def sweep_minima_command(config, minima_values, out_dir, workers):
    """Rerun an experiment for several minimum sample counts"""
    try:
        experiment = load_config(config)
        try:
            values = [int(v) for v in minima_values.split(",") if v.strip()]
        except ValueError as e:
            raise ConfigurationError(f"--minima must be comma-separated integers: {e}") from e
        if not values:
            raise ConfigurationError("--minima needs at least one value")
        rows = sweep_minima(experiment, values, workers=workers)
        path = write_sweep(rows, Path(out_dir) / "sweep.csv")
    except Exception as e:
        fail(e)

    table = Table(show_header=True, header_style="bold magenta")
    table.add_column("Minimum", style="dim")
    table.add_column("Strategy")
    table.add_column("Target")
    table.add_column("Mean n")
    for row in rows:
        table.add_row(str(row["minimum"]), display_name(row["strategy"]), row["target"], f"{row['mean_n']:.1f}")
    console.print(table)
    console.print(f"\n[bold green]✅ Wrote {path}[/bold green]")


if __name__ == "__main__":
    cli()
