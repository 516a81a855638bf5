import math

import numpy as np
import pytest

from swarm_errors import InvalidParameterError
from swarm_stats import (
    BOOTSTRAP_MAX_CELLS,
    SampleSummary,
    _bootstrap_batch,
    bootstrap_mean_ci,
    ratio_half_width,
    sample_summary,
    z_score,
)


def test_summary_of_known_sample():
    s = sample_summary([1.0, 2.0, 3.0, 4.0, 5.0])
    assert s.n == 5
    assert s.mean == pytest.approx(3.0)
    assert s.variance == pytest.approx(2.5)
    # t_{0.975, 4} = 2.776445
    assert s.ci_half_width == pytest.approx(2.776445 * math.sqrt(2.5 / 5), rel=1e-5)
    assert s.contains(3.0)
    assert not s.contains(10.0)


def test_single_value_has_unbounded_interval():
    s = sample_summary([7.0])
    assert s.mean == 7.0
    assert math.isinf(s.ci_half_width)
    assert math.isinf(s.standard_error)


def test_empty_sample_rejected():
    with pytest.raises(InvalidParameterError):
        sample_summary([])
    with pytest.raises(InvalidParameterError):
        bootstrap_mean_ci([])


def test_bootstrap_interval_brackets_mean_and_is_seeded():
    data = np.random.default_rng(3).exponential(2.0, size=500)
    lo, hi = bootstrap_mean_ci(data, seed=11)
    assert lo < data.mean() < hi
    assert (lo, hi) == bootstrap_mean_ci(data, seed=11)


def test_bootstrap_roughly_agrees_with_t_interval():
    data = np.random.default_rng(5).normal(10.0, 1.0, size=2000)
    lo, hi = bootstrap_mean_ci(data, seed=1)
    s = sample_summary(data)
    assert (hi - lo) / 2 == pytest.approx(s.ci_half_width, rel=0.15)


def test_z_score_and_degenerate_cases():
    s = SampleSummary(n=100, mean=2.0, variance=4.0, ci_half_width=0.4)
    assert z_score(s, 1.0) == pytest.approx(5.0)
    flat = SampleSummary(n=10, mean=1.0, variance=0.0, ci_half_width=0.0)
    assert z_score(flat, 1.0) == 0.0
    assert z_score(flat, 0.0) == math.inf


def test_ratio_half_width_delta_method():
    # ratio 2, relative errors 0.01 and 0.02
    hw = ratio_half_width(4.0, 0.04, 2.0, 0.04)
    assert hw == pytest.approx(1.959964 * 2.0 * math.sqrt(0.01 ** 2 + 0.02 ** 2), rel=1e-5)


@pytest.mark.parametrize("n", [2, 500, 144_000, 10 ** 7])
def test_bootstrap_batches_stay_bounded(n):
    batch = _bootstrap_batch(n, 2000)
    assert 1 <= batch <= 2000
    assert batch * n <= max(BOOTSTRAP_MAX_CELLS, n)


def test_bootstrap_handles_long_profile_samples():
    # about as many busy periods as a 1e6-hour profile run produces
    data = np.random.default_rng(8).exponential(1.93, size=150_000)
    lo, hi = bootstrap_mean_ci(data, n_resamples=100, seed=2)
    assert lo < data.mean() < hi


def test_bootstrap_of_one_value_is_that_value():
    assert bootstrap_mean_ci([4.0]) == (4.0, 4.0)
