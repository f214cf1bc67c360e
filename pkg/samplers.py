import bisect
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from binning import GridSpec
from errors import ConfigurationError, DomainError

logger = logging.getLogger(__name__)

# Nearest-changepoint distance reported when there are no changepoints
NO_CHANGEPOINT_DISTANCE = 1.0
DEFAULT_THIN = 50
NEAREST = "nearest"
INTENSITY = "intensity"


class UniformStream:
    """Buffered U(0,1) variates from a numpy Generator, consumed in order"""

    def __init__(self, rng: np.random.Generator, block: int = 8192):
        self.rng = rng
        self._block = block
        self._buffer: List[float] = []
        self._position = 0

    def random(self) -> float:
        if self._position >= len(self._buffer):
            self._buffer = self.rng.random(self._block).tolist()
            self._position = 0
        value = self._buffer[self._position]
        self._position += 1
        return value


@dataclass(frozen=True)
class ChangepointConfig:
    changepoints: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "changepoints", tuple(float(t) for t in self.changepoints))
        previous = 0.0
        for tau in self.changepoints:
            if not 0.0 < tau < 1.0:
                raise DomainError(f"changepoint {tau} lies outside (0, 1)")
            if tau <= previous and previous > 0.0:
                raise DomainError(f"changepoints must be strictly ascending, got {self.changepoints}")
            previous = tau

    @property
    def k(self) -> int:
        return len(self.changepoints)


@dataclass(frozen=True)
class PoissonProcessData:
    events: Tuple[float, ...]
    horizon: float = 1.0

    def __post_init__(self):
        events = tuple(float(t) for t in self.events)
        object.__setattr__(self, "events", events)
        if any(b < a for a, b in zip(events, events[1:])):
            raise DomainError("event times must be ascending")
        if events and (events[0] < 0.0 or events[-1] > self.horizon):
            raise DomainError(f"event times must lie within [0, {self.horizon}]")

    def __len__(self):
        return len(self.events)

    def count_between(self, low: float, high: float) -> int:
        """Events in [low, high), or [low, high] for the segment ending at the horizon"""
        upper = bisect.bisect_right if high >= self.horizon else bisect.bisect_left
        return upper(self.events, high) - bisect.bisect_left(self.events, low)


@dataclass(frozen=True)
class ChangepointModel:
    """
    Poisson(nu) number of changepoints placed as uniform order statistics on
    (0, 1), and independent Gamma(a, b) (shape, rate) segment intensities
    that are integrated out. With likelihood=False the posterior is the prior.
    """

    nu: float = 1.0
    gamma_shape: float = 1.0
    gamma_rate: float = 1.0
    max_k: Optional[int] = None
    likelihood: bool = True

    def __post_init__(self):
        for name in ("nu", "gamma_shape", "gamma_rate"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_k is not None and self.max_k < 0:
            raise ConfigurationError(f"max_k must be nonnegative, got {self.max_k}")

    @classmethod
    def for_data(cls, data: PoissonProcessData, nu: float = 1.0, gamma_shape: float = 1.0, **kwargs) -> "ChangepointModel":
        """Default rate b = a / (event count) so the prior mean intensity is the observed rate"""
        total = len(data)
        gamma_rate = gamma_shape / total if total else 1.0
        return cls(nu=nu, gamma_shape=gamma_shape, gamma_rate=gamma_rate, **kwargs)

    def segment_log_evidence(self, count: int, length: float) -> float:
        if not self.likelihood:
            return 0.0
        a, b = self.gamma_shape, self.gamma_rate
        return a * math.log(b) - math.lgamma(a) + math.lgamma(a + count) - (a + count) * math.log(b + length)

    def log_prior(self, k: int) -> float:
        return -self.nu + k * math.log(self.nu)


def simulate_poisson_process(breaks: Sequence[float], levels: Sequence[float], rng: np.random.Generator) -> PoissonProcessData:
    """Piecewise-constant intensity on [0, 1]: Poisson counts per segment, uniform times within"""
    if len(levels) != len(breaks) + 1:
        raise ConfigurationError(f"need {len(breaks) + 1} levels for {len(breaks)} breaks, got {len(levels)}")
    if any(level < 0 for level in levels):
        raise ConfigurationError("intensity levels must be nonnegative")
    edges = [0.0, *[float(b) for b in breaks], 1.0]
    if any(hi <= lo for lo, hi in zip(edges, edges[1:])):
        raise ConfigurationError(f"breaks must be strictly ascending inside (0, 1), got {list(breaks)}")
    events = []
    for (low, high), level in zip(zip(edges, edges[1:]), levels):
        count = rng.poisson(level * (high - low))
        events.append(rng.uniform(low, high, size=count))
    merged = np.sort(np.concatenate(events)) if events else np.empty(0)
    return PoissonProcessData(events=tuple(merged.tolist()))


def config_log_posterior(model: ChangepointModel, data: PoissonProcessData, config: ChangepointConfig) -> float:
    """Unnormalized log posterior of a changepoint configuration, intensities marginalized"""
    if not isinstance(config, ChangepointConfig):
        config = ChangepointConfig(tuple(config))
    if model.max_k is not None and config.k > model.max_k:
        return -math.inf
    edges = [0.0, *config.changepoints, data.horizon]
    return model.log_prior(config.k) + math.fsum(_segment_term(model, data, low, high) for low, high in zip(edges, edges[1:]))


def _segment_term(model: ChangepointModel, data: PoissonProcessData, low: float, high: float) -> float:
    return model.segment_log_evidence(data.count_between(low, high), high - low)


def _move_probabilities(k: int) -> Tuple[float, float]:
    """(P(birth), P(death)); move takes the rest"""
    if k == 0:
        return 0.5, 0.0
    return 1.0 / 3.0, 1.0 / 3.0


def _advance(changepoints: List[float], model: ChangepointModel, data: PoissonProcessData, rng) -> bool:
    """One birth / death / move Metropolis-Hastings step, in place. Returns acceptance."""
    k = len(changepoints)
    p_birth, p_death = _move_probabilities(k)
    u = rng.random()

    if u < p_birth:
        if model.max_k is not None and k >= model.max_k:
            return False
        tau = rng.random()
        if tau <= 0.0:
            return False
        position = bisect.bisect_left(changepoints, tau)
        low = changepoints[position - 1] if position > 0 else 0.0
        high = changepoints[position] if position < k else data.horizon
        log_ratio = (
            _segment_term(model, data, low, tau)
            + _segment_term(model, data, tau, high)
            - _segment_term(model, data, low, high)
            + math.log(model.nu)
            + math.log(_move_probabilities(k + 1)[1] / (k + 1))
            - math.log(p_birth)
        )
        if log_ratio >= 0 or rng.random() < math.exp(log_ratio):
            changepoints.insert(position, tau)
            return True
        return False

    if u < p_birth + p_death:
        position = min(int(rng.random() * k), k - 1)
        tau = changepoints[position]
        low = changepoints[position - 1] if position > 0 else 0.0
        high = changepoints[position + 1] if position + 1 < k else data.horizon
        log_ratio = (
            _segment_term(model, data, low, high)
            - _segment_term(model, data, low, tau)
            - _segment_term(model, data, tau, high)
            - math.log(model.nu)
            + math.log(_move_probabilities(k - 1)[0])
            - math.log(p_death / k)
        )
        if log_ratio >= 0 or rng.random() < math.exp(log_ratio):
            del changepoints[position]
            return True
        return False

    if k == 0:
        return False
    position = min(int(rng.random() * k), k - 1)
    tau = changepoints[position]
    low = changepoints[position - 1] if position > 0 else 0.0
    high = changepoints[position + 1] if position + 1 < k else data.horizon
    proposal = low + (high - low) * rng.random()
    if not low < proposal < high:
        return False
    log_ratio = (
        _segment_term(model, data, low, proposal)
        + _segment_term(model, data, proposal, high)
        - _segment_term(model, data, low, tau)
        - _segment_term(model, data, tau, high)
    )
    if log_ratio >= 0 or rng.random() < math.exp(log_ratio):
        changepoints[position] = proposal
        return True
    return False


def rjmcmc_step(state: ChangepointConfig, model: ChangepointModel, data: PoissonProcessData, rng) -> ChangepointConfig:
    """
    One reversible-jump step on the marginal changepoint posterior.

    rng only needs a random() method returning U(0,1) variates (a numpy
    Generator or a UniformStream).
    """
    changepoints = list(state.changepoints)
    if _advance(changepoints, model, data, rng):
        return ChangepointConfig(tuple(changepoints))
    return state


def nearest_changepoint_distances(changepoints: Sequence[float], points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    if len(changepoints) == 0:
        return np.full(points.shape, NO_CHANGEPOINT_DISTANCE)
    taus = np.asarray(changepoints, dtype=float)
    right = np.searchsorted(taus, points)
    left_distance = np.where(right > 0, points - taus[np.maximum(right - 1, 0)], np.inf)
    right_distance = np.where(right < len(taus), taus[np.minimum(right, len(taus) - 1)] - points, np.inf)
    return np.minimum(np.abs(left_distance), np.abs(right_distance))


def intensity_draws(
    changepoints: Sequence[float],
    data: PoissonProcessData,
    model: ChangepointModel,
    points: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """One conditional Gamma(a + c_s, b + L_s) draw per segment, read off at each point"""
    edges = np.array([0.0, *changepoints, data.horizon])
    counts = np.array([data.count_between(lo, hi) for lo, hi in zip(edges[:-1], edges[1:])], dtype=float)
    lengths = np.diff(edges)
    levels = rng.gamma(model.gamma_shape + counts, 1.0 / (model.gamma_rate + lengths))
    segment = np.clip(np.searchsorted(edges, np.asarray(points, dtype=float), side="right") - 1, 0, len(levels) - 1)
    return levels[segment]


def functions_of_interest(
    config: ChangepointConfig,
    data: PoissonProcessData,
    model: ChangepointModel,
    t: float,
    rng: np.random.Generator,
) -> Tuple[float, float]:
    """(distance from t to the nearest changepoint, intensity drawn for t's segment)"""
    if not 0.0 <= t <= data.horizon:
        raise DomainError(f"reference point {t} lies outside [0, {data.horizon}]")
    points = np.array([t])
    distance = float(nearest_changepoint_distances(config.changepoints, points)[0])
    intensity = float(intensity_draws(config.changepoints, data, model, points, rng)[0])
    return distance, intensity


def gaussian_draw(mean: float, sd: float, rng: np.random.Generator) -> float:
    if not sd > 0:
        raise DomainError(f"sd must be positive, got {sd}")
    return mean + sd * float(rng.standard_normal())


def default_reference_points(count: int = 100) -> np.ndarray:
    return np.linspace(0.0, 1.0, count)


class GaussianSampler:
    """N(mean, sd^2) draws binned on a univariate grid"""

    def __init__(self, mean: float, sd: float, grid: GridSpec, rng: np.random.Generator, block: int = 4096):
        if not sd > 0:
            raise ConfigurationError(f"sd must be positive, got {sd}")
        self.mean = mean
        self.sd = sd
        self.grid = grid
        self.rng = rng
        self._block = block
        self._buffer: List[float] = []
        self._position = 0
        self.draws = 0

    def draw(self) -> float:
        if self._position >= len(self._buffer):
            self._buffer = (self.mean + self.sd * self.rng.standard_normal(self._block)).tolist()
            self._position = 0
        value = self._buffer[self._position]
        self._position += 1
        self.draws += 1
        return value

    def bin_key(self, sample: float) -> int:
        return self.grid.bin_value(sample)

    def reference_values(self, sample, which: str) -> np.ndarray:
        raise ConfigurationError("reference-point functions are only defined for changepoint targets")


@dataclass
class ChangepointSampler:
    """
    Thinned marginal RJMCMC chain started at k = 0; every draw advances the
    chain `thin` steps and returns the last state.
    """

    model: ChangepointModel
    data: PoissonProcessData
    grid: GridSpec
    rng: np.random.Generator
    thin: int = DEFAULT_THIN
    function_rng: Optional[np.random.Generator] = None
    reference_points: np.ndarray = field(default_factory=default_reference_points)
    draws: int = 0
    accepted: int = 0
    steps: int = 0

    def __post_init__(self):
        if self.thin < 1:
            raise ConfigurationError(f"thin must be at least 1, got {self.thin}")
        self._uniforms = UniformStream(self.rng)
        self._state: List[float] = []

    @property
    def state(self) -> ChangepointConfig:
        return ChangepointConfig(tuple(self._state))

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.steps if self.steps else 0.0

    def draw(self) -> ChangepointConfig:
        for _ in range(self.thin):
            self.accepted += _advance(self._state, self.model, self.data, self._uniforms)
        self.steps += self.thin
        self.draws += 1
        return ChangepointConfig(tuple(self._state))

    def bin_key(self, sample: ChangepointConfig) -> Tuple[int, ...]:
        return self.grid.bin_config(sample.changepoints)

    def reference_values(self, sample: ChangepointConfig, which: str) -> np.ndarray:
        if which == NEAREST:
            return nearest_changepoint_distances(sample.changepoints, self.reference_points)
        if which == INTENSITY:
            if self.function_rng is None:
                raise ConfigurationError("intensity draws need a function_rng stream")
            return intensity_draws(sample.changepoints, self.data, self.model, self.reference_points, self.function_rng)
        raise ConfigurationError(f"unknown function of interest {which!r}")


def batch_means_standard_error(values: Sequence[float], batches: int = 50) -> float:
    """
    Monte Carlo standard error of the mean of a correlated chain output,
    from the spread of non-overlapping batch means. Draws past the last
    full batch are left out.
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        raise DomainError(f"a standard error needs at least two values, got {values.size}")
    batches = min(batches, values.size)
    if batches < 2:
        raise DomainError(f"batch means need at least two batches, got {batches}")
    size = values.size // batches
    means = values[: size * batches].reshape(batches, size).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def read_events(path: Union[str, Path]) -> PoissonProcessData:
    values = []
    with Path(path).open("r") as f:
        for line in f:
            line = line.strip()
            if line:
                values.append(float(line))
    if not values:
        logger.warning(f"Event file {path} holds no events")
    return PoissonProcessData(events=tuple(values))


def write_events(data: PoissonProcessData, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text("".join(f"{t!r}\n" for t in data.events))
    return path


def format_config(config: ChangepointConfig) -> str:
    return f"{config.k};" + ",".join(repr(t) for t in config.changepoints)


def parse_config(line: str) -> ChangepointConfig:
    k_token, _, taus = line.strip().partition(";")
    changepoints = tuple(float(t) for t in taus.split(",") if t)
    if int(k_token) != len(changepoints):
        raise DomainError(f"sample line {line!r} declares k={k_token} but lists {len(changepoints)} changepoints")
    return ChangepointConfig(changepoints)


def write_samples(configs: Sequence[ChangepointConfig], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text("".join(format_config(c) + "\n" for c in configs))
    return path


def read_samples(path: Union[str, Path]) -> List[ChangepointConfig]:
    with Path(path).open("r") as f:
        return [parse_config(line) for line in f if line.strip()]
