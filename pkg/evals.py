from pathlib import Path

import numpy as np
import pytest
from scipy.stats import poisson

from binned_measure import BinnedMeasure
from binning import GridSpec, histogram_counts, histogram_log_marginal_likelihood, optimize_bins
from estimators import GrassbergerState, SplitJsdState, grassberger_batch_decrease, grassberger_batch_error
from experiment_config import load_config
from harness import run_experiment
from samplers import ChangepointModel, ChangepointSampler, PoissonProcessData, batch_means_standard_error

BASE_DIR = Path(__file__).resolve().parent

pytestmark = pytest.mark.slow


def run_preset(name, **overrides):
    config = load_config(BASE_DIR / "data" / f"{name}.json")
    if overrides:
        config = config.model_copy(update=overrides)
    return run_experiment(config)


def size_ratio(result, strategy):
    n = result.mean_sizes(strategy)
    return n[1] / n[0]


def ekl_ratio(result, strategy):
    e = result.ekl[strategy]
    return e[1] / e[0]


def test_max_loss_two_gaussians_balances_errors():
    result = run_preset("two_gaussian_max", strategies=["equal", "grassberger"])

    assert 1.8 <= size_ratio(result, "grassberger") <= 2.2
    assert 0.85 <= ekl_ratio(result, "grassberger") <= 1.2
    assert ekl_ratio(result, "equal") > 1.6


def test_ave_loss_two_gaussians_beats_equal_allocation():
    result = run_preset("two_gaussian_ave", strategies=["equal", "grassberger"])

    assert 1.25 <= size_ratio(result, "grassberger") <= 1.55
    assert result.realized_loss("grassberger") <= result.realized_loss("equal")


def test_changepoint_allocation_follows_intensity_jumps():
    result = run_preset("changepoint_max", strategies=["grassberger"])
    n1, n2, n3 = result.mean_sizes("grassberger")

    assert n3 > n2 > n1


def test_bin_width_of_standard_normal_draws():
    data = np.random.default_rng(2024).standard_normal(100_000)
    K_hat, _, _ = optimize_bins(data, -10.0, 10.0, (1, 200))

    assert 60 <= K_hat <= 130


@pytest.mark.parametrize("K, alpha", [(1, 1e-3), (7, 0.5), (92, 3.0), (400, 1e3)])
def test_single_point_marginal_likelihood_over_wide_grid(K, alpha):
    counts = histogram_counts([1.7], -10.0, 10.0, K)
    assert histogram_log_marginal_likelihood(counts, K, alpha, -10.0, 10.0) == pytest.approx(-np.log(20.0), abs=1e-10)


@pytest.mark.parametrize("nu", [1.0, 2.5])
def test_prior_recovery_over_four_million_steps(nu):
    sampler = ChangepointSampler(
        model=ChangepointModel(nu=nu, likelihood=False),
        data=PoissonProcessData(()),
        grid=GridSpec(0.0, 1.0, 50, tails=False),
        rng=np.random.default_rng(99),
        thin=10,
    )
    ks = np.array([sampler.draw().k for _ in range(400_000)])
    observed_max = int(ks.max())
    truncated = poisson.pmf(np.arange(observed_max + 1), nu)
    truncated /= truncated.sum()
    for k in np.flatnonzero(truncated >= 1e-3):
        assert abs(np.mean(ks == k) - truncated[k]) < 5 * batch_means_standard_error(ks == k, batches=100)


def test_incremental_estimates_at_scale():
    rng = np.random.default_rng(0)
    states = [GrassbergerState(BinnedMeasure()) for _ in range(10)]
    splits = [SplitJsdState() for _ in range(10)]
    for _ in range(10_000):
        j = int(rng.integers(0, 10))
        key = int(rng.integers(0, 200))
        states[j].observe(states[j].measure.insert(key))
        splits[j].insert(key)

    for state, split in zip(states, splits):
        assert state.error == pytest.approx(grassberger_batch_error(state.measure), rel=1e-10)
        assert state.decrease == pytest.approx(grassberger_batch_decrease(state.measure), rel=1e-10)
        batch = BinnedMeasure.from_counts(split.full.counts).entropy() - 0.5 * (
            BinnedMeasure.from_counts(split.odd.counts).entropy() + BinnedMeasure.from_counts(split.even.counts).entropy()
        )
        assert split.value == pytest.approx(max(0.0, batch), rel=1e-10, abs=1e-14)
