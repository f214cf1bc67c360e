import logging
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import gammaln

from errors import ConfigurationError, DomainError
from numerics import log_gamma

logger = logging.getLogger(__name__)

LEFT_TAIL = -1


@dataclass(frozen=True)
class GridSpec:
    """
    K equal-width interior bins [a + i w, a + (i + 1) w) on [a, b] with
    w = (b - a) / K; x == b falls in the last interior bin. With tails,
    x < a maps to LEFT_TAIL (-1) and x > b to the right tail index K.
    """

    a: float
    b: float
    K: int
    tails: bool = True

    def __post_init__(self):
        if not self.a < self.b:
            raise ConfigurationError(f"grid needs a < b, got [{self.a}, {self.b}]")
        if self.K < 1:
            raise ConfigurationError(f"grid needs at least one interior bin, got K={self.K}")

    @property
    def width(self) -> float:
        return (self.b - self.a) / self.K

    @property
    def right_tail(self) -> int:
        return self.K

    def interior_index(self, x: float) -> int:
        return min(int(math.floor((x - self.a) / self.width)), self.K - 1)

    def bin_value(self, x: float) -> int:
        if self.a <= x <= self.b:
            return self.interior_index(x)
        if not self.tails:
            raise DomainError(f"{x} lies outside [{self.a}, {self.b}] and the grid has no tail bins")
        return LEFT_TAIL if x < self.a else self.right_tail

    def bin_config(self, changepoints: Iterable[float]) -> Tuple[int, ...]:
        indices = []
        for tau in changepoints:
            if not self.a <= tau < self.b:
                raise DomainError(f"changepoint {tau} lies outside [{self.a}, {self.b})")
            indices.append(self.interior_index(tau))
        return tuple(sorted(indices))


def bin_value(grid: GridSpec, x: float) -> int:
    return grid.bin_value(x)


def bin_config(grid: GridSpec, config) -> Tuple[int, ...]:
    changepoints = getattr(config, "changepoints", config)
    return grid.bin_config(changepoints)


def histogram_counts(data: Sequence[float], a: float, b: float, K: int) -> np.ndarray:
    grid = GridSpec(a, b, K, tails=False)
    values = np.asarray(data, dtype=float)
    if values.size and (values.min() < a or values.max() > b):
        raise DomainError(f"data must lie within [{a}, {b}]")
    indices = np.minimum(np.floor((values - a) / grid.width).astype(int), K - 1)
    return np.bincount(indices, minlength=K)


def histogram_log_marginal_likelihood(counts: Sequence[int], K: int, alpha: float, a: float, b: float) -> float:
    """
    Log marginal likelihood of bin counts under a regular K-bin histogram on
    [a, b] with a Dirichlet(alpha (b - a) / K) prior on the bin
    probabilities:

        ln G(c) - ln G(c + n) - K ln G(c/K) - n ln((b - a)/K) + sum ln G(c/K + n_i)

    where c = alpha (b - a).
    """
    if len(counts) != K:
        raise DomainError(f"expected {K} bin counts, got {len(counts)}")
    if not alpha > 0:
        raise DomainError(f"alpha must be positive, got {alpha}")
    if not a < b:
        raise DomainError(f"need a < b, got [{a}, {b}]")
    counts = np.asarray(counts, dtype=float)
    n = float(counts.sum())
    c = alpha * (b - a)
    per_bin = c / K
    return float(
        log_gamma(c)
        - log_gamma(c + n)
        - K * log_gamma(per_bin)
        - n * math.log((b - a) / K)
        + np.sum(gammaln(per_bin + counts))
    )


def _best_alpha(counts: np.ndarray, K: int, a: float, b: float, alpha_range: Tuple[float, float]) -> Tuple[float, float]:
    low, high = math.log(alpha_range[0]), math.log(alpha_range[1])

    def negative(log_alpha):
        return -histogram_log_marginal_likelihood(counts, K, math.exp(log_alpha), a, b)

    if high - low < 1e-12:
        return alpha_range[0], -negative(low)
    result = minimize_scalar(negative, bounds=(low, high), method="bounded", options={"xatol": 1e-6})
    # the bounded golden-section search never evaluates the endpoints
    candidates = [(result.fun, result.x), (negative(low), low), (negative(high), high)]
    value, log_alpha = min(candidates)
    return math.exp(log_alpha), -value


def optimize_bins(
    data: Sequence[float],
    a: float,
    b: float,
    K_range: Tuple[int, int],
    alpha_range: Tuple[float, float] = (1e-3, 1e3),
) -> Tuple[int, float, float]:
    """
    Picks the number of equal-width bins (and Dirichlet concentration alpha)
    maximizing the histogram marginal likelihood of the data.

    Returns:
        (K_hat, alpha_hat, log marginal likelihood); ties go to the smallest K
    """
    values = np.asarray(data, dtype=float)
    if values.size == 0:
        raise ConfigurationError("optimize_bins needs at least one data value")
    k_min, k_max = int(K_range[0]), int(K_range[1])
    if k_min < 1 or k_max < k_min:
        raise ConfigurationError(f"invalid K range {K_range}")
    if not 0 < alpha_range[0] <= alpha_range[1]:
        raise ConfigurationError(f"invalid alpha range {alpha_range}")

    best: Optional[Tuple[int, float, float]] = None
    for K in range(k_min, k_max + 1):
        counts = histogram_counts(values, a, b, K)
        alpha, log_ml = _best_alpha(counts, K, a, b, alpha_range)
        if best is None or log_ml > best[2] + 1e-9 * max(1.0, abs(best[2])):
            best = (K, alpha, log_ml)
    logger.info(f"Bin-count search over K in [{k_min}, {k_max}]: K_hat={best[0]}, alpha_hat={best[1]:.4g}")
    return best
