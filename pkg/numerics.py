import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.special as sp
from scipy.optimize import brentq

from errors import DomainError

logger = logging.getLogger(__name__)

# Bisection tolerance in x; the CDF is checked against the target afterwards
_QUANTILE_XTOL = 1e-14


@dataclass(frozen=True)
class QuantileQuery:
    degrees_of_freedom: int
    probability: float

    def __post_init__(self):
        if int(self.degrees_of_freedom) != self.degrees_of_freedom or self.degrees_of_freedom < 1:
            raise DomainError(f"degrees_of_freedom must be a positive integer, got {self.degrees_of_freedom}")
        if not 0.0 <= self.probability < 1.0:
            raise DomainError(f"probability must lie in [0, 1), got {self.probability}")


def digamma(x: float) -> float:
    """
    The digamma function psi(x) = d/dx ln Gamma(x) for x > 0.

    Raises:
        DomainError: if x is not positive
    """
    if not x > 0:
        raise DomainError(f"digamma requires x > 0, got {x}")
    return float(sp.digamma(x))


def log_gamma(x: float) -> float:
    """
    ln Gamma(x) for x > 0.

    Raises:
        DomainError: if x is not positive
    """
    if not x > 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return float(sp.gammaln(x))


def chi_square_cdf(x: float, degrees_of_freedom: int) -> float:
    """Chi-square CDF via the regularized lower incomplete gamma function"""
    if x <= 0:
        return 0.0
    return float(sp.gammainc(degrees_of_freedom / 2.0, x / 2.0))


def chi_square_quantile(query: QuantileQuery) -> float:
    """
    Returns x with chi_square_cdf(x, df) == probability.

    Found by bracketed root finding on the regularized incomplete gamma
    function; results are cached per (df, p).
    """
    if query.probability == 0.0:
        return 0.0
    return _cached_quantile(int(query.degrees_of_freedom), float(query.probability))


@lru_cache(maxsize=4096)
def _cached_quantile(degrees_of_freedom: int, probability: float) -> float:
    def gap(x):
        return chi_square_cdf(x, degrees_of_freedom) - probability

    # mean + many sd always brackets for p < 1 - 1e-16
    upper = float(degrees_of_freedom) + 10.0 * math.sqrt(2.0 * degrees_of_freedom) + 10.0
    while gap(upper) < 0:
        upper *= 2.0
    quantile = brentq(gap, 0.0, upper, xtol=_QUANTILE_XTOL, rtol=4 * np.finfo(float).eps, maxiter=500)
    logger.debug(f"chi-square quantile df={degrees_of_freedom} p={probability} -> {quantile}")
    return quantile


class PhiTable:
    """
    Lazily grown table of phi(n) = n * (ln n - psi(n)) for integer n >= 0,
    with phi(0) = 0.

    Small n are evaluated through scipy's digamma; from ASYMPTOTIC_FROM on the
    expansion 1/2 + 1/(12n) - 1/(120n^3) + 1/(252n^5) - 1/(240n^7) is used,
    which avoids the cancellation in ln n - psi(n) and is exact to double
    precision there.
    """

    ASYMPTOTIC_FROM = 64

    def __init__(self, initial_size: int = 1024):
        self._values: list = []
        self._grow(initial_size)

    def __len__(self):
        return len(self._values)

    def __call__(self, n: int) -> float:
        values = self._values
        if n >= len(values):
            self._grow(max(2 * len(values), n + 1))
            values = self._values
        return values[n]

    def _grow(self, size: int):
        n = np.arange(size, dtype=float)
        out = np.zeros(size)
        small = (n > 0) & (n < self.ASYMPTOTIC_FROM)
        out[small] = n[small] * (np.log(n[small]) - sp.digamma(n[small]))
        large = n >= self.ASYMPTOTIC_FROM
        inv = 1.0 / n[large]
        inv2 = inv * inv
        out[large] = 0.5 + inv * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)))
        # swap in whole so concurrent readers never see a partial table
        self._values = out.tolist()


PHI = PhiTable()


def chi_square_quantile_of(degrees_of_freedom: int, probability: float) -> float:
    """Convenience wrapper building the QuantileQuery"""
    return chi_square_quantile(QuantileQuery(degrees_of_freedom, probability))
