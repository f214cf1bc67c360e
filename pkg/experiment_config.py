import json
import logging
from pathlib import Path
from typing import Annotated, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from allocation import DEFAULT_MINIMUM, MAX_LOSS, equal_sizes
from binning import GridSpec
from errors import ConfigurationError
from samplers import DEFAULT_THIN
from strategy_roster import validate_strategy

logger = logging.getLogger(__name__)


class GaussianTargetSpec(BaseModel):
    kind: Literal["gaussian"] = "gaussian"
    name: Optional[str] = None
    mean: float = 0.0
    sd: float = Field(1.0, gt=0)


class PoissonTargetSpec(BaseModel):
    """
    Changepoint posterior of one Poisson process: events come from
    `events_file` when given, otherwise they are simulated from the
    piecewise-constant intensity (breaks, levels).
    """

    kind: Literal["poisson"] = "poisson"
    name: Optional[str] = None
    breaks: List[float] = Field(default_factory=list)
    levels: List[float] = Field(default_factory=lambda: [100.0])
    events_file: Optional[str] = None
    data_seed: Optional[int] = None
    nu: float = Field(1.0, gt=0)
    gamma_shape: float = Field(1.0, gt=0)
    gamma_rate: Optional[float] = Field(None, gt=0)
    max_k: Optional[int] = Field(None, ge=0)

    @model_validator(mode="after")
    def check_intensity(self):
        if self.events_file is None:
            if len(self.levels) != len(self.breaks) + 1:
                raise ValueError(f"need {len(self.breaks) + 1} levels for {len(self.breaks)} breaks")
            edges = [0.0, *self.breaks, 1.0]
            if any(hi <= lo for lo, hi in zip(edges, edges[1:])):
                raise ValueError(f"breaks must be strictly ascending inside (0, 1), got {self.breaks}")
            if any(level < 0 for level in self.levels):
                raise ValueError("intensity levels must be nonnegative")
        return self


TargetSpec = Annotated[Union[GaussianTargetSpec, PoissonTargetSpec], Field(discriminator="kind")]


class GridConfig(BaseModel):
    a: float
    b: float
    bins: int = Field(..., ge=1)
    tails: bool = True

    @model_validator(mode="after")
    def check_range(self):
        if not self.a < self.b:
            raise ValueError(f"grid needs a < b, got [{self.a}, {self.b}]")
        return self

    def spec(self) -> GridSpec:
        return GridSpec(self.a, self.b, self.bins, self.tails)


class ExperimentConfig(BaseModel):
    name: str = "experiment"
    targets: List[TargetSpec] = Field(..., min_length=1)
    grid: GridConfig
    strategies: List[str] = Field(..., min_length=1)
    loss: Literal["max", "ave"] = MAX_LOSS
    budget: int = Field(..., ge=1)
    minima: Union[int, List[int]] = DEFAULT_MINIMUM
    replications: int = Field(1, ge=1)
    master_seed: int = Field(0, ge=0)
    thin: int = Field(DEFAULT_THIN, ge=1)
    weights: Optional[List[float]] = None
    delta: float = Field(0.05, gt=0, lt=1)
    fox_window: Optional[int] = Field(None, ge=1)
    second_order: bool = False
    reference_points: int = Field(100, ge=1)

    @field_validator("strategies")
    @classmethod
    def unique_strategies(cls, value):
        if len(set(value)) != len(value):
            raise ValueError(f"strategies must not repeat, got {value}")
        return value

    @model_validator(mode="after")
    def check_consistency(self):
        m = len(self.targets)
        minima = self.minima_list()
        if len(minima) != m:
            raise ValueError(f"minima has {len(minima)} entries for {m} targets")
        if any(value < 1 for value in minima):
            raise ValueError("every minimum must be at least 1")
        if sum(minima) > self.budget:
            raise ValueError(f"budget {self.budget} is below the sum of minima {sum(minima)}")
        if "equal" in self.strategies:
            split = equal_sizes(self.budget, m)
            if any(size < minimum for size, minimum in zip(split, minima)):
                raise ValueError(f"the equal strategy's split {split} falls below the minima {minima}")
        if self.weights is not None:
            if len(self.weights) != m:
                raise ValueError(f"weights has {len(self.weights)} entries for {m} targets")
            if any(not w > 0 for w in self.weights):
                raise ValueError("weights must be positive")
        kinds = [t.kind for t in self.targets]
        if len(set(kinds)) > 1:
            raise ValueError("targets must all be gaussian or all be poisson")
        for strategy in self.strategies:
            try:
                validate_strategy(strategy, ["changepoint" if k == "poisson" else k for k in kinds])
            except ConfigurationError as e:
                raise ValueError(str(e)) from e
        if kinds[0] == "poisson" and (self.grid.a != 0.0 or self.grid.b != 1.0):
            raise ValueError("changepoint targets need a grid on [0, 1]")
        return self

    def minima_list(self) -> List[int]:
        if isinstance(self.minima, int):
            return [self.minima] * len(self.targets)
        return list(self.minima)

    @property
    def target_names(self) -> List[str]:
        return [t.name or f"target{j + 1}" for j, t in enumerate(self.targets)]

    def strategy_options(self) -> dict:
        return {"delta": self.delta, "fox_window": self.fox_window, "second_order": self.second_order}


def parse_config(payload: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    try:
        config = ExperimentConfig.model_validate(payload)
    except ValidationError as e:
        raise ConfigurationError(f"Invalid experiment config: {e}") from e
    if base_dir is not None:
        for target in config.targets:
            if isinstance(target, PoissonTargetSpec) and target.events_file:
                path = Path(target.events_file)
                if not path.is_absolute():
                    target.events_file = str((base_dir / path).resolve())
    return config


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """Reads and validates an experiment JSON file; event files resolve relative to it"""
    config_path = Path(path).resolve()
    try:
        with config_path.open("r") as f:
            payload = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigurationError(f"Error reading experiment config {config_path}: {e}") from e
    config = parse_config(payload, base_dir=config_path.parent)
    logger.info(f"Loaded experiment {config.name!r}: {len(config.targets)} targets, strategies {config.strategies}")
    return config


def synthetic_poisson_targets(count: int, seed: int, max_breaks: int = 3) -> List[PoissonTargetSpec]:
    """Random piecewise-constant Poisson processes for many-target experiments"""
    rng = np.random.default_rng(seed)
    targets = []
    for j in range(count):
        breaks = np.sort(rng.uniform(0.05, 0.95, size=rng.integers(0, max_breaks + 1)))
        levels = rng.uniform(20.0, 400.0, size=breaks.size + 1)
        targets.append(
            PoissonTargetSpec(
                name=f"process{j + 1}",
                breaks=[float(b) for b in breaks],
                levels=[float(level) for level in levels],
                data_seed=int(rng.integers(0, 2**31)),
            )
        )
    return targets
