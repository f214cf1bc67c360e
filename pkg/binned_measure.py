import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Hashable, Iterable, List, Sequence, Tuple, Union

from errors import DomainError
from numerics import PHI

logger = logging.getLogger(__name__)

# int for univariate grids, sorted tuple of per-changepoint bins for
# transdimensional ones
BinKey = Union[int, Tuple[int, ...]]


def _plogp(count: int) -> float:
    return count * math.log(count) if count > 1 else 0.0


def _t_term(count: int) -> float:
    """(c+1) phi(c) - c phi(c+1), the per-bin summand of the expected decrease"""
    return (count + 1) * PHI(count) - count * PHI(count + 1)


@dataclass(frozen=True)
class InsertEvent:
    key: Hashable
    previous_count: int
    new_total: int

    @property
    def opened_bin(self) -> bool:
        return self.previous_count == 0


class BinnedMeasure:
    """
    Histogram of samples over discrete bin keys.

    Keeps n, the number of nonempty bins K and three running sums that every
    estimator needs, each updated in O(1) from the one bin that changed:
        sum_plogp = sum n_i ln n_i
        sum_phi   = sum phi(n_i)
        sum_T     = sum (n_i + 1) phi(n_i) - n_i phi(n_i + 1)
    """

    __slots__ = ("counts", "n", "sum_plogp", "sum_phi", "sum_T")

    def __init__(self):
        self.counts: Dict[Hashable, int] = {}
        self.n = 0
        self.sum_plogp = 0.0
        self.sum_phi = 0.0
        self.sum_T = 0.0

    @classmethod
    def from_counts(cls, counts: Dict[Hashable, int]) -> "BinnedMeasure":
        measure = cls()
        for key, count in counts.items():
            if count < 0:
                raise DomainError(f"bin counts must be nonnegative, got {count} for {key!r}")
            if count == 0:
                continue
            measure.counts[key] = int(count)
        measure.n, measure.sum_plogp, measure.sum_phi, measure.sum_T = batch_sums(measure.counts)
        return measure

    @property
    def K(self) -> int:
        return len(self.counts)

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"BinnedMeasure(n={self.n}, K={self.K})"

    def insert(self, key: Hashable) -> InsertEvent:
        previous = self.counts.get(key, 0)
        current = previous + 1
        self.counts[key] = current
        self.n += 1
        self.sum_plogp += _plogp(current) - _plogp(previous)
        self.sum_phi += PHI(current) - PHI(previous)
        self.sum_T += _t_term(current) - _t_term(previous)
        return InsertEvent(key=key, previous_count=previous, new_total=self.n)

    def entropy(self) -> float:
        """Shannon entropy of the normalized measure, in nats"""
        if self.n == 0:
            raise DomainError("entropy of an empty measure is undefined")
        return max(0.0, math.log(self.n) - self.sum_plogp / self.n)


def batch_sums(counts: Dict[Hashable, int]) -> Tuple[int, float, float, float]:
    """Recomputes (n, sum_plogp, sum_phi, sum_T) from scratch"""
    values = [c for c in counts.values() if c > 0]
    return (
        sum(values),
        math.fsum(_plogp(c) for c in values),
        math.fsum(PHI(c) for c in values),
        math.fsum(_t_term(c) for c in values),
    )


def insert(measure: BinnedMeasure, key: Hashable) -> InsertEvent:
    return measure.insert(key)


def entropy(measure: BinnedMeasure) -> float:
    return measure.entropy()


def entropy_of_probabilities(probabilities: Iterable[float]) -> float:
    return max(0.0, -math.fsum(p * math.log(p) for p in probabilities if p > 0))


def jsd_across(measures: Sequence[BinnedMeasure]) -> float:
    """
    Jensen-Shannon divergence of several measures: entropy of their
    equal-weight mixture minus the mean of their entropies. The mixture
    averages normalized probabilities, so measures of different size count
    equally.
    """
    if not measures:
        raise DomainError("jsd_across needs at least one measure")
    weight = 1.0 / len(measures)
    mixture: Dict[Hashable, float] = {}
    entropies = []
    for measure in measures:
        if measure.n == 0:
            raise DomainError("jsd_across is undefined for an empty measure")
        for key, count in measure.counts.items():
            mixture[key] = mixture.get(key, 0.0) + weight * count / measure.n
        entropies.append(measure.entropy())
    divergence = entropy_of_probabilities(mixture.values()) - math.fsum(entropies) * weight
    return max(0.0, divergence)


def bin_key_sort_key(key: BinKey):
    if isinstance(key, tuple):
        return (1, len(key), key)
    return (0, 0, (key,))


def format_bin_key(key: BinKey) -> str:
    if isinstance(key, tuple):
        # trailing comma keeps a one-changepoint key apart from a univariate bin
        return ",".join(str(i) for i in key) + ("," if len(key) == 1 else "")
    return str(key)


def parse_bin_key(token: str) -> BinKey:
    token = token.strip()
    if token == "":
        return ()
    if "," in token:
        return tuple(int(part) for part in token.split(",") if part)
    return int(token)


def dump_measure(measure: BinnedMeasure, path: Union[str, Path]) -> Path:
    """Writes `key<TAB>count` lines in a stable key order"""
    path = Path(path)
    lines = [
        f"{format_bin_key(key)}\t{measure.counts[key]}\n"
        for key in sorted(measure.counts, key=bin_key_sort_key)
    ]
    path.write_text("".join(lines))
    return path


def load_measure(path: Union[str, Path]) -> BinnedMeasure:
    counts: Dict[Hashable, int] = {}
    with Path(path).open("r") as f:
        for line_number, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            try:
                key_token, count_token = line.split("\t")
                key = parse_bin_key(key_token)
                count = int(count_token)
            except ValueError as e:
                raise DomainError(f"{path}:{line_number}: malformed measure line {line!r}: {e}") from e
            counts[key] = counts.get(key, 0) + count
    logger.debug(f"Loaded measure with {len(counts)} bins from {path}")
    return BinnedMeasure.from_counts(counts)


def measures_from_lists(samples: List[List[Hashable]]) -> List[BinnedMeasure]:
    measures = []
    for keys in samples:
        measure = BinnedMeasure()
        for key in keys:
            measure.insert(key)
        measures.append(measure)
    return measures
