import itertools
import math

import numpy as np
import pytest

from binned_measure import BinnedMeasure, jsd_across
from errors import ConsistencyError, DomainError
from estimators import (
    GrassbergerState,
    SplitJsdState,
    extent_squared,
    grassberger_batch_decrease,
    grassberger_batch_error,
    grassberger_decrease,
    grassberger_error,
    miller_madow,
    phi,
    split_jsd_error,
)

EULER_GAMMA = 0.5772156649015329


def one_step_oracle(counts):
    """Current error minus the error expected after one more draw landing in bin i w.p. n_i / n"""
    measure = BinnedMeasure.from_counts(dict(enumerate(counts)))
    n = measure.n
    expected_next = math.fsum(
        (c / n) * grassberger_batch_error(BinnedMeasure.from_counts({**dict(enumerate(counts)), i: c + 1}))
        for i, c in enumerate(counts)
    )
    return grassberger_batch_error(measure) - expected_next


def test_phi_values():
    assert phi(0) == 0.0
    assert phi(1) == pytest.approx(EULER_GAMMA, rel=1e-14)
    assert phi(1, second_order=True) == pytest.approx(EULER_GAMMA + 0.5, rel=1e-14)
    assert phi(2, second_order=True) == pytest.approx(phi(2) - 1.0 / 3.0, rel=1e-14)
    with pytest.raises(DomainError):
        phi(-1)


def test_two_singletons_error_is_euler_gamma():
    measure = BinnedMeasure.from_counts({"a": 1, "b": 1})
    assert grassberger_batch_error(measure) == pytest.approx(EULER_GAMMA, rel=1e-14)


def test_incremental_updates_match_batch_formulas():
    rng = np.random.default_rng(11)
    states = [GrassbergerState(BinnedMeasure()) for _ in range(10)]
    for _ in range(10_000):
        state = states[rng.integers(0, 10)]
        event = state.measure.insert(int(rng.integers(0, 60)))
        grassberger_error(state, event)
        grassberger_decrease(state, event)

    for state in states:
        if state.measure.n == 0:
            continue
        assert state.error == pytest.approx(grassberger_batch_error(state.measure), rel=1e-10)
        assert state.decrease == pytest.approx(grassberger_batch_decrease(state.measure), rel=1e-10)


def test_second_order_incremental_matches_batch():
    rng = np.random.default_rng(3)
    state = GrassbergerState(BinnedMeasure(), second_order=True)
    for key in rng.integers(0, 15, size=400):
        state.observe(state.measure.insert(int(key)))
    assert state.error == pytest.approx(grassberger_batch_error(state.measure, second_order=True), rel=1e-10)


def test_resync_from_existing_measure():
    measure = BinnedMeasure.from_counts({0: 4, 1: 1, 2: 9})
    state = GrassbergerState(measure)
    assert state.error == pytest.approx(grassberger_batch_error(measure), rel=1e-14)
    assert state.decrease == pytest.approx(grassberger_batch_decrease(measure), rel=1e-14)


def test_decrease_matches_one_step_oracle_on_small_measures():
    for bins in range(1, 7):
        for counts in itertools.product(range(1, 6), repeat=bins):
            measure = BinnedMeasure.from_counts(dict(enumerate(counts)))
            assert grassberger_batch_decrease(measure) == pytest.approx(one_step_oracle(counts), abs=1e-12)


@pytest.mark.parametrize("counts", [(30,), (29, 1), (10, 10, 10), (1, 1, 1, 1, 1, 25)])
def test_incremental_decrease_matches_one_step_oracle(counts):
    state = GrassbergerState(BinnedMeasure())
    for key, count in enumerate(counts):
        for _ in range(count):
            state.observe(state.measure.insert(key))
    assert state.decrease == pytest.approx(one_step_oracle(counts), abs=1e-12)


def test_stale_event_is_rejected():
    measure = BinnedMeasure()
    state = GrassbergerState(measure)
    stale = measure.insert(0)
    measure.insert(1)
    with pytest.raises(ConsistencyError):
        state.update_error(stale)
    with pytest.raises(ConsistencyError):
        state.update_decrease(stale)


def test_batch_estimates_of_empty_measure_raise():
    with pytest.raises(DomainError):
        grassberger_batch_error(BinnedMeasure())
    with pytest.raises(DomainError):
        miller_madow(BinnedMeasure())


def test_miller_madow():
    assert miller_madow(BinnedMeasure.from_counts({0: 3, 1: 1})) == pytest.approx(1.0 / 8.0)
    assert miller_madow(BinnedMeasure.from_counts({0: 12})) == 0.0


def test_extent_squared_of_uniform_measure():
    measure = BinnedMeasure.from_counts({k: 3 for k in range(4)})
    assert extent_squared(measure) == pytest.approx(16.0, rel=1e-13)


def test_split_jsd_of_alternating_keys_is_ln_two():
    state = SplitJsdState()
    split_jsd_error(state, 0)
    assert split_jsd_error(state, 1) == pytest.approx(math.log(2.0), rel=1e-14)


def test_split_jsd_of_repeated_key_is_zero():
    state = SplitJsdState()
    for _ in range(9):
        value = state.insert("x")
    assert value == pytest.approx(0.0, abs=1e-14)


def test_split_jsd_matches_batch_divergence_of_the_halves():
    rng = np.random.default_rng(5)
    state = SplitJsdState()
    for key in rng.integers(0, 25, size=2000):
        state.insert(int(key))
    # equal halves, so the full measure is their equal-weight mixture
    assert state.odd.n == state.even.n == 1000
    assert state.value == pytest.approx(jsd_across([state.odd, state.even]), rel=1e-9, abs=1e-12)


def test_grassberger_error_is_roughly_unbiased():
    rng = np.random.default_rng(2)
    p = np.linspace(1.0, 3.0, 30)
    p /= p.sum()
    n = 1000
    estimates, divergences = [], []
    for _ in range(1000):
        counts = rng.multinomial(n, p)
        estimates.append(grassberger_batch_error(BinnedMeasure.from_counts(dict(enumerate(counts.tolist())))))
        observed = counts > 0
        empirical = counts[observed] / n
        divergences.append(float(np.sum(empirical * np.log(empirical / p[observed]))))
    assert np.mean(estimates) == pytest.approx(np.mean(divergences), rel=0.1)
