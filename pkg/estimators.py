import logging
import math
from typing import Hashable, Optional

from binned_measure import BinnedMeasure, InsertEvent, batch_sums
from errors import ConsistencyError, DomainError
from numerics import PHI

logger = logging.getLogger(__name__)


def phi(count: int, second_order: bool = False) -> float:
    """
    Grassberger's bias term phi(n) = n * (ln n - psi(n)), phi(0) = 0.

    With second_order the oscillating refinement (-1)^n / (n + 1) is
    subtracted as well.
    """
    if count < 0:
        raise DomainError(f"phi requires a nonnegative count, got {count}")
    if count == 0:
        return 0.0
    value = PHI(count)
    if second_order:
        value -= (-1.0) ** count / (count + 1)
    return value


def second_order_correction_sum(measure: BinnedMeasure) -> float:
    return math.fsum((-1.0) ** c / (c + 1) for c in measure.counts.values())


class GrassbergerState:
    """
    Grassberger estimate of the Monte Carlo divergence error of a measure,
    error = sum phi(n_i) / n, together with the expected decrease in that
    error from one more independent draw,
    decrease = sum [(n_i + 1) phi(n_i) - n_i phi(n_i + 1)] / (n (n + 1)).

    Both are advanced incrementally from InsertEvents of the wrapped measure.
    The decrease always uses first-order phi.
    """

    def __init__(self, measure: Optional[BinnedMeasure] = None, second_order: bool = False):
        self.measure = measure if measure is not None else BinnedMeasure()
        self.second_order = second_order
        self.error = 0.0
        self.decrease = 0.0
        self._correction = 0.0
        self.resync()

    def resync(self):
        """Recomputes error and decrease from the measure's counts"""
        n = self.measure.n
        if n == 0:
            self.error = self.decrease = self._correction = 0.0
            return
        _, _, sum_phi, sum_T = batch_sums(self.measure.counts)
        self._correction = second_order_correction_sum(self.measure) if self.second_order else 0.0
        self.error = (sum_phi - self._correction) / n
        self.decrease = sum_T / (n * (n + 1))

    def _check(self, event: InsertEvent):
        if event.new_total != self.measure.n:
            raise ConsistencyError(
                f"stale insert event: new_total={event.new_total} but measure holds n={self.measure.n}"
            )

    def update_error(self, event: InsertEvent) -> float:
        self._check(event)
        n = event.new_total
        current = event.previous_count + 1
        increment = phi(current, self.second_order) - phi(event.previous_count, self.second_order)
        self.error = ((n - 1) * self.error + increment) / n
        return self.error

    def update_decrease(self, event: InsertEvent) -> float:
        self._check(event)
        n = event.new_total
        c = event.previous_count + 1
        second_difference = PHI(c + 1) - 2.0 * PHI(c) + PHI(c - 1)
        self.decrease = ((n - 1) * n * self.decrease - c * second_difference) / (n * (n + 1))
        return self.decrease

    def observe(self, event: InsertEvent):
        self.update_error(event)
        self.update_decrease(event)


def grassberger_error(state: GrassbergerState, event: InsertEvent) -> float:
    return state.update_error(event)


def grassberger_decrease(state: GrassbergerState, event: InsertEvent) -> float:
    return state.update_decrease(event)


def grassberger_batch_error(measure: BinnedMeasure, second_order: bool = False) -> float:
    if measure.n == 0:
        raise DomainError("error of an empty measure is undefined")
    return math.fsum(phi(c, second_order) for c in measure.counts.values()) / measure.n


def grassberger_batch_decrease(measure: BinnedMeasure) -> float:
    if measure.n == 0:
        raise DomainError("decrease of an empty measure is undefined")
    n = measure.n
    return math.fsum((c + 1) * PHI(c) - c * PHI(c + 1) for c in measure.counts.values()) / (n * (n + 1))


def miller_madow(measure: BinnedMeasure) -> float:
    """(K - 1) / (2n), the Miller-Madow entropy bias"""
    if measure.n == 0:
        raise DomainError("Miller-Madow bias of an empty measure is undefined")
    return (measure.K - 1) / (2.0 * measure.n)


def extent_squared(measure: BinnedMeasure) -> float:
    return math.exp(2.0 * measure.entropy())


class SplitJsdState:
    """
    Samples dealt alternately into an odd and an even half; the error is the
    Jensen-Shannon divergence of the two halves,
        H(full) - (H(odd) + H(even)) / 2,
    recomputed exactly from the maintained n ln n sums after each insert.
    """

    def __init__(self):
        self.full = BinnedMeasure()
        self.odd = BinnedMeasure()
        self.even = BinnedMeasure()
        # the first sample is sample 1, which is odd
        self.next_is_odd = True
        self.value = 0.0

    def insert(self, key: Hashable) -> float:
        self.full.insert(key)
        (self.odd if self.next_is_odd else self.even).insert(key)
        self.next_is_odd = not self.next_is_odd
        self.value = self.divergence()
        return self.value

    def divergence(self) -> float:
        if self.odd.n == 0 or self.even.n == 0:
            return 0.0
        return max(0.0, self.full.entropy() - 0.5 * (self.odd.entropy() + self.even.entropy()))


def split_jsd_error(state: SplitJsdState, key: Hashable) -> float:
    return state.insert(key)
