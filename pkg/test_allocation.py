import csv

import numpy as np
import pytest

from allocation import (
    AVE_LOSS,
    MAX_LOSS,
    AllocationPlan,
    EqualCriterion,
    ErrorCriterion,
    ExtentCriterion,
    FoxCriterion,
    GrassbergerCriterion,
    MillerMadowCriterion,
    SissonCriterion,
    SplitJsdCriterion,
    choose_next,
    equal_sizes,
    run_allocation,
    sisson_error_and_decrease,
    write_trace_csv,
)
from binned_measure import BinnedMeasure, InsertEvent
from binning import GridSpec
from errors import ConfigurationError
from estimators import grassberger_batch_decrease, grassberger_batch_error
from samplers import GaussianSampler

GRID = GridSpec(-10.0, 10.0, 100)


class FixedCriterion(ErrorCriterion):
    def __init__(self, error, decrease):
        self._error = error
        self._decrease = decrease

    def observe(self, event, sample):
        pass

    def error(self):
        return self._error

    def expected_decrease(self):
        return self._decrease


def gaussian_pair(seed=0, sds=(1.0, 2.0)):
    return [GaussianSampler(0.0, sd, GRID, np.random.default_rng([seed, j])) for j, sd in enumerate(sds)]


def event(previous_count, new_total):
    return InsertEvent(key=0, previous_count=previous_count, new_total=new_total)


@pytest.mark.parametrize("budget, samplers, expected", [(10, 3, [4, 3, 3]), (9, 3, [3, 3, 3]), (5, 1, [5])])
def test_equal_sizes(budget, samplers, expected):
    assert equal_sizes(budget, samplers) == expected


def test_choose_next_breaks_ties_at_lowest_index():
    criteria = [FixedCriterion(0.5, 0.1), FixedCriterion(0.9, 0.3), FixedCriterion(0.9, 0.3)]
    assert choose_next(criteria, MAX_LOSS) == 1
    assert choose_next(criteria, AVE_LOSS) == 1
    assert choose_next([FixedCriterion(1.0, 1.0)] * 4, MAX_LOSS) == 0


def test_choose_next_uses_error_for_max_and_decrease_for_ave():
    criteria = [FixedCriterion(0.9, 0.1), FixedCriterion(0.5, 0.3)]
    assert choose_next(criteria, MAX_LOSS) == 0
    assert choose_next(criteria, AVE_LOSS) == 1


def test_choose_next_applies_weights():
    criteria = [FixedCriterion(0.9, 0.1), FixedCriterion(0.5, 0.3)]
    assert choose_next(criteria, MAX_LOSS, weights=[1.0, 2.0]) == 1


@pytest.mark.parametrize(
    "kwargs",
    [
        {"budget": 10, "minima": [6, 6]},
        {"budget": 10, "minima": []},
        {"budget": 10, "minima": [0, 2]},
        {"budget": 10, "minima": [1, 1], "loss": "median"},
        {"budget": 10, "minima": [1, 1], "weights": [1.0]},
        {"budget": 10, "minima": [1, 1], "weights": [1.0, 0.0]},
    ],
)
def test_plan_validation(kwargs):
    with pytest.raises(ConfigurationError):
        AllocationPlan(**kwargs)


def test_equal_strategy_splits_budget_evenly():
    result = run_allocation(gaussian_pair(), [EqualCriterion(), EqualCriterion()], AllocationPlan.uniform(1001, 2, 10))
    assert result.sizes == [501, 500]
    assert [m.n for m in result.measures] == [501, 500]


def test_equal_strategy_refuses_a_split_below_the_minima():
    plan = AllocationPlan(budget=1200, minima=[100, 900])
    with pytest.raises(ConfigurationError):
        run_allocation(gaussian_pair(), [EqualCriterion(), EqualCriterion()], plan)
    result = run_allocation(gaussian_pair(), [GrassbergerCriterion(), GrassbergerCriterion()], plan)
    assert result.sizes[1] >= 900


@pytest.mark.parametrize(
    "build",
    [
        lambda: GrassbergerCriterion(),
        lambda: GrassbergerCriterion(second_order=True),
        lambda: FoxCriterion(),
        lambda: MillerMadowCriterion(),
        lambda: ExtentCriterion(),
        lambda: SplitJsdCriterion(),
    ],
)
@pytest.mark.parametrize("loss", [MAX_LOSS, AVE_LOSS])
def test_sizes_respect_budget_and_minima(build, loss):
    plan = AllocationPlan(budget=3000, minima=[200, 300], loss=loss)
    result = run_allocation(gaussian_pair(), [build(), build()], plan)
    assert sum(result.sizes) == 3000
    assert result.sizes[0] >= 200 and result.sizes[1] >= 300
    assert [m.n for m in result.measures] == result.sizes


def test_grassberger_criterion_tracks_its_measure():
    criteria = [GrassbergerCriterion(), GrassbergerCriterion()]
    result = run_allocation(gaussian_pair(3), criteria, AllocationPlan.uniform(4000, 2, 100))
    for criterion, measure in zip(criteria, result.measures):
        assert criterion.error() == pytest.approx(grassberger_batch_error(measure), rel=1e-10)
        assert criterion.expected_decrease() == pytest.approx(grassberger_batch_decrease(measure), rel=1e-10)


def test_max_loss_gives_wider_target_about_twice_the_samples():
    criteria = [GrassbergerCriterion(), GrassbergerCriterion()]
    result = run_allocation(gaussian_pair(5), criteria, AllocationPlan.uniform(20_000, 2, 500))
    assert 1.5 < result.sizes[1] / result.sizes[0] < 2.6


def test_weights_shift_samples_to_the_heavier_target():
    plan = AllocationPlan(budget=4000, minima=[100, 100], weights=[1.0, 50.0])
    result = run_allocation(gaussian_pair(1, sds=(1.0, 1.0)), [GrassbergerCriterion(), GrassbergerCriterion()], plan)
    assert result.sizes[1] > 5 * result.sizes[0]


def test_allocation_consumes_each_sampler_in_draw_order():
    equal = run_allocation(gaussian_pair(9), [EqualCriterion(), EqualCriterion()], AllocationPlan.uniform(600, 2, 300))
    fox = run_allocation(gaussian_pair(9), [FoxCriterion(), FoxCriterion()], AllocationPlan.uniform(600, 2, 300))
    reference = gaussian_pair(9)
    for j in range(2):
        prefix = BinnedMeasure()
        for _ in range(300):
            prefix.insert(GRID.bin_value(reference[j].draw()))
        assert equal.measures[j].counts == prefix.counts
        assert fox.measures[j].counts == prefix.counts


def test_fox_criterion_counts_new_bins():
    fox = FoxCriterion(delta=0.05)
    for previous, total in [(0, 1), (0, 2), (1, 3), (0, 4), (2, 5)]:
        fox.observe(event(previous, total), None)
    assert (fox.K, fox.n) == (3, 5)
    assert fox.new_bin_probability() == pytest.approx(0.5)
    assert fox.error() == pytest.approx(5.991464547107979 / 10.0, rel=1e-10)
    expected_next = 0.5 * fox.bound(4, 6) + 0.5 * fox.bound(3, 6)
    assert fox.expected_decrease() == pytest.approx(fox.error() - expected_next, rel=1e-12)


def test_fox_window_uses_recent_draws_only():
    fox = FoxCriterion(window=2)
    for previous, total in [(0, 1), (0, 2), (0, 3), (1, 4), (2, 5)]:
        fox.observe(event(previous, total), None)
    assert fox.new_bin_probability() == 0.0
    assert FoxCriterion().new_bin_probability() == 0.0


def test_fox_single_bin_has_no_error():
    fox = FoxCriterion()
    for previous, total in [(0, 1), (1, 2), (2, 3)]:
        fox.observe(event(previous, total), None)
    assert fox.error() == 0.0
    assert fox.expected_decrease() == 0.0


@pytest.mark.parametrize("kwargs", [{"delta": 0.0}, {"delta": 1.0}, {"window": 0}])
def test_fox_validation(kwargs):
    with pytest.raises(ConfigurationError):
        FoxCriterion(**kwargs)


def test_miller_madow_criterion():
    criterion = MillerMadowCriterion()
    for previous, total in [(0, 1), (0, 2), (1, 3), (0, 4), (2, 5)]:
        criterion.observe(event(previous, total), None)
    assert criterion.error() == pytest.approx(0.2)


def test_extent_criterion_reads_bound_measure():
    criterion = ExtentCriterion()
    measure = BinnedMeasure()
    criterion.bind(measure)
    for key in range(4):
        criterion.observe(measure.insert(key), None)
    assert criterion.error() == pytest.approx(4.0, rel=1e-13)
    assert criterion.expected_decrease() == pytest.approx(16.0 * (1 / 4 - 1 / 5), rel=1e-13)


def test_sisson_welford_update():
    criterion = SissonCriterion(evaluate=np.asarray, reference_count=2)
    assert sisson_error_and_decrease(criterion, [1.0, 2.0]) == (0.0, 0.0)
    sisson_error_and_decrease(criterion, [3.0, 4.0])
    error, decrease = sisson_error_and_decrease(criterion, [5.0, 6.0])
    assert error == pytest.approx(8.0 / 3.0)
    assert decrease == pytest.approx(8.0 * (1 / 3 - 1 / 4))
    criterion.observe(None, [7.0, 8.0])
    assert criterion.error() == pytest.approx(2 * (20.0 / 3.0) / 4.0)
    with pytest.raises(ConfigurationError):
        criterion.update([1.0, 2.0, 3.0])


def test_run_allocation_checks_lengths():
    with pytest.raises(ConfigurationError):
        run_allocation(gaussian_pair(), [GrassbergerCriterion()], AllocationPlan.uniform(100, 2, 10))


def test_trace_records_every_decision(tmp_path):
    plan = AllocationPlan.uniform(700, 2, 300)
    result = run_allocation(gaussian_pair(), [GrassbergerCriterion(), GrassbergerCriterion()], plan, trace=True)
    assert len(result.trace) == 100
    assert result.trace[0].step == 600
    for step in result.trace:
        assert step.chosen == int(np.argmax(step.scores))

    path = write_trace_csv(result, tmp_path / "trace.csv")
    with path.open() as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["step", "chosen", "score_0", "score_1"]
    assert len(rows) == 101


def test_trace_does_not_change_the_allocation():
    plan = AllocationPlan.uniform(2500, 2, 200)
    plain = run_allocation(gaussian_pair(4), [GrassbergerCriterion(), GrassbergerCriterion()], plan)
    traced = run_allocation(gaussian_pair(4), [GrassbergerCriterion(), GrassbergerCriterion()], plan, trace=True)
    assert plain.sizes == traced.sizes
