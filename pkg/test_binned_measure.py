import math

import numpy as np
import pytest

from binned_measure import (
    BinnedMeasure,
    batch_sums,
    dump_measure,
    entropy,
    format_bin_key,
    insert,
    jsd_across,
    load_measure,
    measures_from_lists,
    parse_bin_key,
)
from errors import DomainError


def test_insert_reports_previous_count_and_total():
    measure = BinnedMeasure()
    first = insert(measure, 3)
    second = insert(measure, 3)
    third = insert(measure, 7)

    assert (first.previous_count, first.new_total, first.opened_bin) == (0, 1, True)
    assert (second.previous_count, second.new_total, second.opened_bin) == (1, 2, False)
    assert third.opened_bin
    assert measure.counts == {3: 2, 7: 1}
    assert (measure.n, measure.K) == (3, 2)


def test_entropy_of_uniform_measure():
    measure = BinnedMeasure.from_counts({0: 5, 1: 5, 2: 5, 3: 5})
    assert entropy(measure) == pytest.approx(math.log(4.0), rel=1e-14)


def test_entropy_of_point_mass_is_zero():
    assert BinnedMeasure.from_counts({(): 9}).entropy() == pytest.approx(0.0, abs=1e-15)


def test_entropy_of_empty_measure_raises():
    with pytest.raises(DomainError):
        BinnedMeasure().entropy()


def test_running_sums_match_batch_recomputation():
    rng = np.random.default_rng(7)
    measure = BinnedMeasure()
    for key in rng.integers(0, 40, size=5000):
        measure.insert(int(key))

    n, sum_plogp, sum_phi, sum_t = batch_sums(measure.counts)
    assert measure.n == n == 5000
    assert measure.sum_plogp == pytest.approx(sum_plogp, rel=1e-10)
    assert measure.sum_phi == pytest.approx(sum_phi, rel=1e-10)
    assert measure.sum_T == pytest.approx(sum_t, rel=1e-10)


def test_from_counts_rejects_negative_counts():
    with pytest.raises(DomainError):
        BinnedMeasure.from_counts({0: 2, 1: -1})


def test_jsd_of_identical_measures_is_zero():
    measures = measures_from_lists([[0, 1, 1, 2]] * 5)
    assert jsd_across(measures) == pytest.approx(0.0, abs=1e-12)


def test_jsd_of_disjoint_point_masses_is_ln_two():
    measures = [BinnedMeasure.from_counts({0: 3}), BinnedMeasure.from_counts({1: 10})]
    assert jsd_across(measures) == pytest.approx(math.log(2.0), rel=1e-14)


def test_jsd_weights_measures_equally_regardless_of_size():
    small = BinnedMeasure.from_counts({0: 1, 1: 1})
    large = BinnedMeasure.from_counts({0: 500, 1: 500})
    assert jsd_across([small, large]) == pytest.approx(0.0, abs=1e-12)


def test_jsd_rejects_empty_input():
    with pytest.raises(DomainError):
        jsd_across([])
    with pytest.raises(DomainError):
        jsd_across([BinnedMeasure.from_counts({0: 1}), BinnedMeasure()])


@pytest.mark.parametrize(
    "key, token",
    [(5, "5"), (-1, "-1"), ((), ""), ((3,), "3,"), ((1, 4, 4), "1,4,4")],
)
def test_bin_key_tokens(key, token):
    assert format_bin_key(key) == token
    assert parse_bin_key(token) == key


def test_dump_and_load_transdimensional_measure(tmp_path):
    measure = BinnedMeasure.from_counts({(): 4, (3,): 2, (3, 40): 7, (10, 20): 1})
    path = dump_measure(measure, tmp_path / "measure.tsv")

    lines = path.read_text().splitlines()
    assert lines[0] == "\t4"
    assert lines[1] == "3,\t2"

    loaded = load_measure(path)
    assert loaded.counts == measure.counts
    assert loaded.n == 14


def test_load_measure_reports_malformed_lines(tmp_path):
    path = tmp_path / "broken.tsv"
    path.write_text("1\t3\n2 4\n")
    with pytest.raises(DomainError, match="broken.tsv:2"):
        load_measure(path)


def random_measure(rng, keys=4):
    counts = rng.integers(0, 6, size=keys)
    counts[rng.integers(0, keys)] += 1
    return BinnedMeasure.from_counts(dict(enumerate(counts.tolist())))


@pytest.mark.parametrize("M", [2, 3, 5, 10])
def test_jsd_lies_between_zero_and_ln_m(M):
    rng = np.random.default_rng(M)
    for _ in range(50):
        value = jsd_across([random_measure(rng, keys=2 * M) for _ in range(M)])
        assert 0.0 <= value <= math.log(M) + 1e-12


def test_square_root_jsd_satisfies_the_triangle_inequality():
    rng = np.random.default_rng(8)
    for _ in range(100):
        p, q, r = (random_measure(rng) for _ in range(3))
        direct = math.sqrt(jsd_across([p, r]))
        assert direct <= math.sqrt(jsd_across([p, q])) + math.sqrt(jsd_across([q, r])) + 1e-12
