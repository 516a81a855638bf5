import math
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.stats as st

from swarm_errors import InvalidParameterError

"""
Sample statistics for Monte Carlo busy periods: mean, variance, Student-t
interval, percentile bootstrap, z-score against an analytic value and a
delta-method interval for a ratio of two independent means.
"""

CI_LEVEL = 0.95
BOOTSTRAP_RESAMPLES = 2000
BOOTSTRAP_MAX_CELLS = 4_000_000


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    variance: float
    ci_half_width: float

    @property
    def standard_error(self) -> float:
        if self.n < 2:
            return math.inf
        return math.sqrt(self.variance / self.n)

    @property
    def ci(self) -> Tuple[float, float]:
        return self.mean - self.ci_half_width, self.mean + self.ci_half_width

    def contains(self, value: float) -> bool:
        lo, hi = self.ci
        return lo <= value <= hi


def sample_summary(values: Sequence[float], level: float = CI_LEVEL) -> SampleSummary:
    """Mean, unbiased variance and t-interval half-width. One value gives an infinite width."""
    data = np.asarray(values, dtype=float)
    n = int(data.size)
    if n == 0:
        raise InvalidParameterError("cannot summarise an empty sample")
    mean = float(data.mean())
    if n == 1:
        return SampleSummary(n=1, mean=mean, variance=0.0, ci_half_width=math.inf)
    variance = float(data.var(ddof=1))
    t = float(st.t.ppf(0.5 + level / 2.0, df=n - 1))
    return SampleSummary(n=n, mean=mean, variance=variance, ci_half_width=t * math.sqrt(variance / n))


def _bootstrap_batch(n: int, n_resamples: int) -> int:
    # resamples per vectorised call, capped so one batch holds BOOTSTRAP_MAX_CELLS values
    return max(1, min(n_resamples, BOOTSTRAP_MAX_CELLS // max(n, 1)))


def bootstrap_mean_ci(
    values: Sequence[float],
    n_resamples: int = BOOTSTRAP_RESAMPLES,
    seed: int = 0,
    level: float = CI_LEVEL,
) -> Tuple[float, float]:
    """Percentile bootstrap interval for the mean, resampled in bounded-memory batches."""
    data = np.asarray(values, dtype=float)
    if data.size == 0:
        raise InvalidParameterError("cannot bootstrap an empty sample")
    if data.size == 1:
        return float(data[0]), float(data[0])
    res = st.bootstrap(
        (data,),
        np.mean,
        n_resamples=n_resamples,
        batch=_bootstrap_batch(data.size, n_resamples),
        confidence_level=level,
        method="percentile",
        vectorized=True,
        random_state=np.random.default_rng(seed),
    )
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def z_score(summary: SampleSummary, target: float) -> float:
    se = summary.standard_error
    if se == 0.0 or not math.isfinite(se):
        return 0.0 if summary.mean == target else math.copysign(math.inf, summary.mean - target)
    return (summary.mean - target) / se


def ratio_half_width(
    num_mean: float, num_se: float, den_mean: float, den_se: float, level: float = CI_LEVEL
) -> float:
    """Delta-method half-width for num_mean/den_mean, numerator and denominator independent."""
    ratio = num_mean / den_mean
    rel_var = (num_se / num_mean) ** 2 + (den_se / den_mean) ** 2
    return float(st.norm.ppf(0.5 + level / 2.0)) * abs(ratio) * math.sqrt(rel_var)
