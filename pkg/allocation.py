import csv
import logging
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np

from binned_measure import BinnedMeasure, InsertEvent
from errors import ConfigurationError
from estimators import GrassbergerState, SplitJsdState, extent_squared
from numerics import chi_square_quantile_of

logger = logging.getLogger(__name__)

MAX_LOSS = "max"
AVE_LOSS = "ave"
LOSSES = (MAX_LOSS, AVE_LOSS)
DEFAULT_MINIMUM = 500
DEFAULT_DELTA = 0.05


class RivalSampler(Protocol):
    def draw(self): ...

    def bin_key(self, sample): ...


class ErrorCriterion(ABC):
    """
    Per-sampler error bookkeeping for the rival sampling algorithm.

    bind() hands the criterion the measure its sampler fills before any draw;
    observe() is then called once per draw with the InsertEvent the draw
    produced in that measure and the raw sample.
    """

    def bind(self, measure: BinnedMeasure) -> None:
        pass

    @abstractmethod
    def observe(self, event: InsertEvent, sample) -> None: ...

    @abstractmethod
    def error(self) -> float: ...

    @abstractmethod
    def expected_decrease(self) -> float: ...


class GrassbergerCriterion(ErrorCriterion):
    def __init__(self, second_order: bool = False):
        self.second_order = second_order
        self.state = GrassbergerState(second_order=second_order)

    def bind(self, measure):
        self.state = GrassbergerState(measure, second_order=self.second_order)

    def observe(self, event, sample):
        self.state.observe(event)

    def error(self):
        return self.state.error

    def expected_decrease(self):
        return self.state.decrease


@dataclass
class FoxCriterion(ErrorCriterion):
    """
    Chi-square criterion: error = chi2_{K-1, 1-delta} / (2n).

    The chance of the next draw opening a new bin is (K-1)/(n-1), or the
    new-bin fraction of the last `window` draws when a window is set.
    """

    delta: float = DEFAULT_DELTA
    window: Optional[int] = None
    K: int = 0
    n: int = 0
    _recent: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.window is not None and self.window < 1:
            raise ConfigurationError(f"window must be positive, got {self.window}")
        self._recent = deque(maxlen=self.window)

    def observe(self, event, sample):
        self.n += 1
        if event.opened_bin:
            self.K += 1
        if self.n > 1:
            self._recent.append(1 if event.opened_bin else 0)

    def bound(self, K: int, n: int) -> float:
        if K <= 1 or n <= 0:
            return 0.0
        return chi_square_quantile_of(K - 1, 1.0 - self.delta) / (2.0 * n)

    def new_bin_probability(self) -> float:
        if self.n < 2:
            return 0.0
        if self.window is None:
            return (self.K - 1) / (self.n - 1)
        return sum(self._recent) / len(self._recent)

    def error(self):
        return self.bound(self.K, self.n)

    def expected_decrease(self):
        return fox_error_and_decrease(self)[1]


def fox_error_and_decrease(state: FoxCriterion) -> Tuple[float, float]:
    error = state.bound(state.K, state.n)
    if state.n < 2:
        return error, 0.0
    p_new = state.new_bin_probability()
    expected_next = p_new * state.bound(state.K + 1, state.n + 1) + (1.0 - p_new) * state.bound(state.K, state.n + 1)
    return error, error - expected_next


class MillerMadowCriterion(FoxCriterion):
    """(K-1)/(2n), with the same new-bin probability as the chi-square criterion"""

    def bound(self, K, n):
        if K <= 1 or n <= 0:
            return 0.0
        return (K - 1) / (2.0 * n)


class ExtentCriterion(ErrorCriterion):
    """
    Squared extent exp(2H) per sample, extent^2 / n; under the max rule the
    allocation settles where n_j is proportional to the squared extent.
    """

    def __init__(self):
        self.measure = BinnedMeasure()

    def bind(self, measure):
        self.measure = measure

    def observe(self, event, sample):
        pass

    def error(self):
        n = self.measure.n
        return extent_squared(self.measure) / n if n else 0.0

    def expected_decrease(self):
        n = self.measure.n
        return extent_squared(self.measure) * (1.0 / n - 1.0 / (n + 1)) if n else 0.0


class SplitJsdCriterion(ErrorCriterion):
    def __init__(self):
        self.state = SplitJsdState()

    def observe(self, event, sample):
        self.state.insert(event.key)

    def error(self):
        return self.state.value

    def expected_decrease(self):
        # the half-vs-half divergence shrinks like 1/n
        return self.state.value / (self.state.full.n + 1)


class SissonCriterion(ErrorCriterion):
    """
    Sum over reference points of the Monte Carlo variance of a function of
    interest, var / n per point, kept with a single-pass (Welford) update
    vectorized over the points.
    """

    def __init__(self, evaluate: Callable[[object], np.ndarray], reference_count: int):
        self.evaluate = evaluate
        self.n = 0
        self.mean = np.zeros(reference_count)
        self.m2 = np.zeros(reference_count)
        self._error = 0.0
        self._decrease = 0.0

    def observe(self, event, sample):
        self.update(self.evaluate(sample))

    def update(self, values) -> Tuple[float, float]:
        values = np.asarray(values, dtype=float)
        if values.shape != self.mean.shape:
            raise ConfigurationError(f"expected {self.mean.size} reference values, got {values.size}")
        self.n += 1
        step = values - self.mean
        self.mean += step / self.n
        self.m2 += step * (values - self.mean)
        if self.n < 2:
            self._error = self._decrease = 0.0
        else:
            total_variance = float(np.sum(self.m2)) / (self.n - 1)
            self._error = total_variance / self.n
            self._decrease = total_variance * (1.0 / self.n - 1.0 / (self.n + 1))
        return self._error, self._decrease

    def error(self):
        return self._error

    def expected_decrease(self):
        return self._decrease


def sisson_error_and_decrease(state: SissonCriterion, values) -> Tuple[float, float]:
    return state.update(values)


class EqualCriterion(ErrorCriterion):
    """
    Marker for the fixed strategy; run_allocation skips the decision loop and
    splits the budget evenly instead.
    """

    def observe(self, event, sample):
        pass

    def error(self):
        return 0.0

    def expected_decrease(self):
        return 0.0


@dataclass
class AllocationPlan:
    budget: int
    minima: Sequence[int]
    loss: str = MAX_LOSS
    weights: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ConfigurationError(f"loss must be one of {LOSSES}, got {self.loss!r}")
        if not self.minima:
            raise ConfigurationError("plan needs at least one sampler")
        if any(m < 1 for m in self.minima):
            raise ConfigurationError(f"every minimum must be at least 1, got {list(self.minima)}")
        if sum(self.minima) > self.budget:
            raise ConfigurationError(f"budget {self.budget} is below the sum of minima {sum(self.minima)}")
        if self.weights is not None:
            if len(self.weights) != len(self.minima):
                raise ConfigurationError("weights and minima must have one entry per sampler")
            if any(not w > 0 for w in self.weights):
                raise ConfigurationError(f"weights must be positive, got {list(self.weights)}")

    @classmethod
    def uniform(cls, budget: int, samplers: int, minimum: int = DEFAULT_MINIMUM, loss: str = MAX_LOSS) -> "AllocationPlan":
        return cls(budget=budget, minima=[minimum] * samplers, loss=loss)


def decision_scores(criteria: Sequence[ErrorCriterion], loss: str, weights: Optional[Sequence[float]] = None) -> List[float]:
    if loss == MAX_LOSS:
        scores = [c.error() for c in criteria]
    else:
        scores = [c.expected_decrease() for c in criteria]
    if weights is not None:
        scores = [w * s for w, s in zip(weights, scores)]
    return scores


def choose_next(criteria: Sequence[ErrorCriterion], loss: str, weights: Optional[Sequence[float]] = None) -> int:
    """Max-loss: largest error. Ave-loss: largest expected decrease. Ties go to the lowest index."""
    if not criteria:
        raise ConfigurationError("choose_next needs at least one criterion")
    return _argmax(decision_scores(criteria, loss, weights))


def _argmax(scores: Sequence[float]) -> int:
    best = 0
    for j in range(1, len(scores)):
        if scores[j] > scores[best]:
            best = j
    return best


@dataclass
class TraceStep:
    step: int
    chosen: int
    scores: List[float]


@dataclass
class AllocationResult:
    sizes: List[int]
    measures: List[BinnedMeasure]
    trace: List[TraceStep] = field(default_factory=list)


def _draw_into(sampler, measure: BinnedMeasure, criterion: Optional[ErrorCriterion]):
    sample = sampler.draw()
    event = measure.insert(sampler.bin_key(sample))
    if criterion is not None:
        criterion.observe(event, sample)


def equal_sizes(budget: int, samplers: int) -> List[int]:
    base, remainder = divmod(budget, samplers)
    return [base + (1 if j < remainder else 0) for j in range(samplers)]


def run_allocation(
    samplers: Sequence[RivalSampler],
    criteria: Sequence[ErrorCriterion],
    plan: AllocationPlan,
    trace: bool = False,
) -> AllocationResult:
    """
    Rival sampling: draw each sampler's minimum, then hand every remaining
    draw of the budget to the sampler the loss rule picks, updating only the
    chosen sampler's measure and criterion.

    A list made entirely of EqualCriterion splits the budget evenly.
    """
    m = len(samplers)
    if len(criteria) != m or len(plan.minima) != m:
        raise ConfigurationError(f"got {m} samplers, {len(criteria)} criteria and {len(plan.minima)} minima")
    measures = [BinnedMeasure() for _ in range(m)]
    result = AllocationResult(sizes=[0] * m, measures=measures)

    if all(isinstance(c, EqualCriterion) for c in criteria):
        sizes = equal_sizes(plan.budget, m)
        if any(size < minimum for size, minimum in zip(sizes, plan.minima)):
            raise ConfigurationError(f"an equal split {sizes} of the budget falls below the minima {list(plan.minima)}")
        for j, size in enumerate(sizes):
            for _ in range(size):
                _draw_into(samplers[j], measures[j], None)
            result.sizes[j] = size
        return result

    for j in range(m):
        criteria[j].bind(measures[j])
        for _ in range(plan.minima[j]):
            _draw_into(samplers[j], measures[j], criteria[j])
        result.sizes[j] = plan.minima[j]
    logger.debug(f"Minimum phase done: sizes={result.sizes}")

    weights = plan.weights
    use_errors = plan.loss == MAX_LOSS
    for step in range(sum(plan.minima), plan.budget):
        if trace:
            scores = decision_scores(criteria, plan.loss, weights)
            chosen = _argmax(scores)
            result.trace.append(TraceStep(step=step, chosen=chosen, scores=scores))
        elif weights is None:
            # inline argmax for the hot loop
            chosen = 0
            best = criteria[0].error() if use_errors else criteria[0].expected_decrease()
            for j in range(1, m):
                score = criteria[j].error() if use_errors else criteria[j].expected_decrease()
                if score > best:
                    best, chosen = score, j
        else:
            chosen = choose_next(criteria, plan.loss, weights)
        _draw_into(samplers[chosen], measures[chosen], criteria[chosen])
        result.sizes[chosen] += 1

    logger.debug(f"Allocation done: sizes={result.sizes}")
    return result


def write_trace_csv(result: AllocationResult, path: Union[str, Path]) -> Path:
    path = Path(path)
    m = len(result.sizes)
    with path.open("w", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["step", "chosen", *[f"score_{j}" for j in range(m)]])
        for entry in result.trace:
            writer.writerow([entry.step, entry.chosen, *[repr(s) for s in entry.scores]])
    return path
