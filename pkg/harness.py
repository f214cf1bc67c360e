import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from allocation import MAX_LOSS, AllocationPlan, run_allocation
from binned_measure import BinnedMeasure, dump_measure, jsd_across
from errors import DomainError
from experiment_config import ExperimentConfig, GaussianTargetSpec, PoissonTargetSpec, parse_config
from samplers import (
    ChangepointModel,
    ChangepointSampler,
    GaussianSampler,
    PoissonProcessData,
    default_reference_points,
    read_events,
    simulate_poisson_process,
)
from strategy_roster import build_criteria

logger = logging.getLogger(__name__)

# first entry of every stream's spawn key
SAMPLER_STREAM = 0
DATA_STREAM = 1
FUNCTION_STREAM = 2

WORKERS_ENV = "RIVAL_WORKERS"


def stream(master_seed: int, replication: int, target: int, purpose: int = SAMPLER_STREAM) -> np.random.Generator:
    """
    Independent generator for (purpose, replication, target). Keys are
    counters, so a stream never depends on scheduling or on how many draws
    any other stream consumed.
    """
    seed = np.random.SeedSequence(entropy=master_seed, spawn_key=(purpose, replication, target))
    return np.random.Generator(np.random.PCG64(seed))


def resolve_workers(workers: Optional[int] = None) -> int:
    if workers is None:
        configured = os.getenv(WORKERS_ENV)
        workers = int(configured) if configured else (os.cpu_count() or 1)
    return max(1, int(workers))


def load_target_data(config: ExperimentConfig) -> List[Optional[PoissonProcessData]]:
    """Event data per target, fixed for the whole experiment (None for Gaussian targets)"""
    datasets = []
    for j, target in enumerate(config.targets):
        if isinstance(target, GaussianTargetSpec):
            datasets.append(None)
        elif target.events_file:
            datasets.append(read_events(target.events_file))
        else:
            rng = (
                np.random.default_rng(target.data_seed)
                if target.data_seed is not None
                else stream(config.master_seed, 0, j, DATA_STREAM)
            )
            datasets.append(simulate_poisson_process(target.breaks, target.levels, rng))
        if datasets[-1] is not None:
            logger.info(f"Target {config.target_names[j]}: {len(datasets[-1])} events")
    return datasets


def changepoint_model(target: PoissonTargetSpec, data: PoissonProcessData) -> ChangepointModel:
    if target.gamma_rate is not None:
        return ChangepointModel(nu=target.nu, gamma_shape=target.gamma_shape, gamma_rate=target.gamma_rate, max_k=target.max_k)
    return ChangepointModel.for_data(data, nu=target.nu, gamma_shape=target.gamma_shape, max_k=target.max_k)


def build_samplers(config: ExperimentConfig, datasets: Sequence[Optional[PoissonProcessData]], replication: int) -> list:
    """Fresh samplers for one replication; every strategy gets an identical set"""
    grid = config.grid.spec()
    samplers = []
    for j, (target, data) in enumerate(zip(config.targets, datasets)):
        rng = stream(config.master_seed, replication, j)
        if isinstance(target, GaussianTargetSpec):
            samplers.append(GaussianSampler(target.mean, target.sd, grid, rng))
        else:
            samplers.append(
                ChangepointSampler(
                    model=changepoint_model(target, data),
                    data=data,
                    grid=grid,
                    rng=rng,
                    thin=config.thin,
                    function_rng=stream(config.master_seed, replication, j, FUNCTION_STREAM),
                    reference_points=default_reference_points(config.reference_points),
                )
            )
    return samplers


@dataclass
class ReplicationOutcome:
    replication: int
    sizes: Dict[str, List[int]]
    measures: Dict[str, List[BinnedMeasure]]


def run_replication(config: ExperimentConfig, datasets: Sequence[Optional[PoissonProcessData]], replication: int) -> ReplicationOutcome:
    plan = AllocationPlan(
        budget=config.budget, minima=config.minima_list(), loss=config.loss, weights=config.weights
    )
    options = config.strategy_options()
    outcome = ReplicationOutcome(replication=replication, sizes={}, measures={})
    for strategy in config.strategies:
        samplers = build_samplers(config, datasets, replication)
        criteria = build_criteria(strategy, samplers, options)
        result = run_allocation(samplers, criteria, plan)
        outcome.sizes[strategy] = result.sizes
        outcome.measures[strategy] = result.measures
        logger.debug(f"Replication {replication} strategy {strategy}: sizes {result.sizes}")
    return outcome


def ground_truth_ekl(measures: Sequence[BinnedMeasure]) -> float:
    """
    Jensen-Shannon divergence across replications of one target under one
    strategy: a biased but consistent estimate of the Monte Carlo
    divergence error under that strategy's stopping rule.
    """
    if len(measures) < 2:
        raise DomainError(f"ground truth needs at least two replications, got {len(measures)}")
    return jsd_across(measures)


def combine_loss(errors: Sequence[float], loss: str, weights: Optional[Sequence[float]] = None) -> float:
    weights = list(weights) if weights is not None else [1.0] * len(errors)
    if loss == MAX_LOSS:
        return max(w * e for w, e in zip(weights, errors))
    return math.fsum(w * e for w, e in zip(weights, errors)) / math.fsum(weights)


@dataclass
class ExperimentResult:
    name: str
    strategies: List[str]
    target_names: List[str]
    loss: str
    weights: Optional[List[float]] = None
    # strategy -> replication -> target
    sizes: Dict[str, List[List[int]]] = field(default_factory=dict)
    # strategy -> target
    ekl: Dict[str, List[float]] = field(default_factory=dict)
    # strategy -> target -> replication
    measures: Dict[str, List[List[BinnedMeasure]]] = field(default_factory=dict)

    @property
    def replications(self) -> int:
        return len(next(iter(self.sizes.values()))) if self.sizes else 0

    def mean_sizes(self, strategy: str) -> List[float]:
        per_replication = self.sizes[strategy]
        return [math.fsum(row[j] for row in per_replication) / len(per_replication) for j in range(len(self.target_names))]

    def realized_loss(self, strategy: str) -> float:
        return combine_loss(self.ekl[strategy], self.loss, self.weights)

    def pooled_measure(self, strategy: str, target: int) -> BinnedMeasure:
        counts: Dict = {}
        for measure in self.measures[strategy][target]:
            for key, count in measure.counts.items():
                counts[key] = counts.get(key, 0) + count
        return BinnedMeasure.from_counts(counts)


def run_experiment(config: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    """
    Runs every strategy on M replications. Replication r feeds target j from
    the stream (master_seed, r, j), so all strategies see the same draws.
    Replications may run in parallel; results are reduced in replication
    order and do not depend on the worker count.
    """
    workers = resolve_workers(workers)
    datasets = load_target_data(config)
    m = len(config.targets)
    result = ExperimentResult(
        name=config.name,
        strategies=list(config.strategies),
        target_names=config.target_names,
        loss=config.loss,
        weights=config.weights,
        sizes={s: [] for s in config.strategies},
        measures={s: [[] for _ in range(m)] for s in config.strategies},
    )
    logger.info(f"Running {config.name!r}: {config.replications} replications, {workers} workers")

    task = partial(run_replication, config, datasets)
    replications = range(config.replications)
    if workers == 1 or config.replications == 1:
        outcomes: Iterable[ReplicationOutcome] = map(task, replications)
        _collect(result, outcomes, config)
    else:
        with ProcessPoolExecutor(max_workers=min(workers, config.replications)) as executor:
            _collect(result, executor.map(task, replications), config)

    for strategy in config.strategies:
        if config.replications < 2:
            logger.warning("Ground truth needs at least two replications; reporting nan")
            result.ekl[strategy] = [math.nan] * m
        else:
            result.ekl[strategy] = [ground_truth_ekl(result.measures[strategy][j]) for j in range(m)]
        logger.info(f"Strategy {strategy}: mean sizes {result.mean_sizes(strategy)}, ekl {result.ekl[strategy]}")
    return result


def _collect(result: ExperimentResult, outcomes: Iterable[ReplicationOutcome], config: ExperimentConfig):
    for outcome in outcomes:
        for strategy in config.strategies:
            result.sizes[strategy].append(outcome.sizes[strategy])
            for j, measure in enumerate(outcome.measures[strategy]):
                result.measures[strategy][j].append(measure)
        logger.debug(f"Collected replication {outcome.replication}")


def emit_results(result: ExperimentResult, path: Union[str, Path], dump_measures: bool = False) -> List[Path]:
    """
    Writes summary.csv (strategy, target, mean_n, ekl, loss) and sizes.csv
    (strategy, target, replication, n) at full precision, no timestamps.
    """
    out_dir = Path(path)
    out_dir.mkdir(parents=True, exist_ok=True)
    summary_path = out_dir / "summary.csv"
    sizes_path = out_dir / "sizes.csv"

    with summary_path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["strategy", "target", "mean_n", "ekl", "loss"])
        for strategy in result.strategies:
            loss = result.realized_loss(strategy)
            for target, mean_n, ekl in zip(result.target_names, result.mean_sizes(strategy), result.ekl[strategy]):
                writer.writerow([strategy, target, repr(mean_n), repr(ekl), repr(loss)])

    with sizes_path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["strategy", "target", "replication", "n"])
        for strategy in result.strategies:
            for replication, row in enumerate(result.sizes[strategy]):
                for target, n in zip(result.target_names, row):
                    writer.writerow([strategy, target, replication, n])

    written = [summary_path, sizes_path]
    if dump_measures:
        measure_dir = out_dir / "measures"
        measure_dir.mkdir(exist_ok=True)
        for strategy in result.strategies:
            for j, target in enumerate(result.target_names):
                written.append(dump_measure(result.pooled_measure(strategy, j), measure_dir / f"{strategy}__{target}.tsv"))
    logger.info(f"Wrote {len(written)} result files to {out_dir}")
    return written


def sweep_minima(config: ExperimentConfig, minima_values: Sequence[int], workers: Optional[int] = None) -> List[dict]:
    """Reruns the experiment for increasing minimum sample counts and reports mean sizes per setting"""
    rows = []
    for minimum in sorted(minima_values):
        swept = config.model_copy(update={"minima": int(minimum)})
        # revalidate: the budget must still cover the new minima
        swept = parse_config(swept.model_dump())
        result = run_experiment(swept, workers=workers)
        for strategy in result.strategies:
            for target, mean_n in zip(result.target_names, result.mean_sizes(strategy)):
                rows.append({"minimum": int(minimum), "strategy": strategy, "target": target, "mean_n": mean_n})
    return rows


def write_sweep(rows: Sequence[dict], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["minimum", "strategy", "target", "mean_n"])
        for row in rows:
            writer.writerow([row["minimum"], row["strategy"], row["target"], repr(row["mean_n"])])
    return path
