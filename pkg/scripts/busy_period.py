import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy import optimize

from swarm_errors import BusyPeriodOverflowError, InvalidParameterError

"""
Closed-form availability of a swarm modelled as an M/G/inf queue.

Publishers arrive at rate r, peers at rate lambda; every holder stays for a
residence of mean s/mu and peers arriving while nobody holds the content leave
at once. With load x = s(r+lambda)/mu the expected busy period is

    B = (e^x - 1) / (r + lambda)

and doubling the file size multiplies B by (e^{2x}-1)/(e^x-1) = e^x + 1.

Run directly for a quick table:
python scripts/busy_period.py
"""

log = logging.getLogger(__name__)

# ---------------------------
# Numeric limits
# ---------------------------
# Largest load we evaluate; exp(709.78) is the double-precision ceiling
OVERFLOW_EXPONENT = 700.0
# Below this load the small-x path matters; expm1 handles it, we only log it
SMALL_LOAD = 1e-5
# Decades swept by limit_check
LIMIT_DECADES = 7
# Final B/(s/mu) must be this close to 1 for the mu limit to hold
LIMIT_RATIO_TOL = 1e-3

MU_TO_INFINITY = "mu_to_infinity"
LAMBDA_TO_INFINITY = "lambda_to_infinity"
LIMIT_SELECTORS = (MU_TO_INFINITY, LAMBDA_TO_INFINITY)


@dataclass(frozen=True)
class SwarmParams:
    """The model quadruple (s, mu, r, lambda).

    `lam` stands in for lambda, which is a Python keyword.
    lam = 0 is a legal publishers-only swarm; r = 0 is rejected because no
    busy period could ever start again after the first idle.
    """

    s: float
    mu: float
    r: float
    lam: float = 0.0

    def __post_init__(self):
        for name in ("s", "mu", "r", "lam"):
            value = getattr(self, name)
            if not np.isfinite(value):
                raise InvalidParameterError(f"{name} must be finite, got {value!r}")
        if self.s <= 0:
            raise InvalidParameterError(f"s must be > 0, got {self.s!r}")
        if self.mu <= 0:
            raise InvalidParameterError(f"mu must be > 0, got {self.mu!r}")
        if self.r <= 0:
            raise InvalidParameterError(
                f"r must be > 0, got {self.r!r}; content can never return once lost"
            )
        if self.lam < 0:
            raise InvalidParameterError(f"lambda must be >= 0, got {self.lam!r}")

    @property
    def total_rate(self) -> float:
        return self.r + self.lam

    @property
    def residence(self) -> float:
        """Mean time a holder stays online, s/mu."""
        return self.s / self.mu

    @property
    def load(self) -> float:
        return self.s * self.total_rate / self.mu

    def with_(self, **changes) -> "SwarmParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class AnalyticReport:
    busy_period: float
    bundling_factor: float
    availability_fraction: float
    load: float
    mean_idle: float


@dataclass
class LimitDiagnostic:
    """Outcome of walking one parameter through decades toward infinity."""

    which: str
    multipliers: List[float]
    swept_values: List[float]
    busy_periods: List[float]
    ratios_to_residence: List[float] = field(default_factory=list)
    overflow_at: Optional[float] = None
    holds: bool = False


def _checked_load(params: SwarmParams) -> float:
    x = params.load
    if not np.isfinite(x) or x > OVERFLOW_EXPONENT:
        raise BusyPeriodOverflowError(x, OVERFLOW_EXPONENT)
    if x < SMALL_LOAD:
        log.debug(f"small load x={x:.3g}; using expm1 path")
    return x


def busy_period_from_load(x: float, total_rate: float) -> float:
    """(e^x - 1)/(r+lambda) without cancellation for small x."""
    return float(np.expm1(x) / total_rate)


def expected_busy_period(params: SwarmParams) -> float:
    """Expected length of a busy period, B."""
    x = _checked_load(params)
    return busy_period_from_load(x, params.total_rate)


def bundling_factor(params: SwarmParams) -> float:
    """B(2s)/B(s) = (e^{2x}-1)/(e^x-1), evaluated in the stable e^x + 1 form."""
    x = _checked_load(params)
    return float(np.exp(x) + 1.0)


def mean_idle_period(params: SwarmParams) -> float:
    # only a publisher arrival can end an idle period
    return 1.0 / params.r


def availability_fraction(params: SwarmParams) -> float:
    """Long-run share of time the content is obtainable: B/(B + 1/r)."""
    b = expected_busy_period(params)
    return b / (b + mean_idle_period(params))


def analytic_report(params: SwarmParams) -> AnalyticReport:
    return AnalyticReport(
        busy_period=expected_busy_period(params),
        bundling_factor=bundling_factor(params),
        availability_fraction=availability_fraction(params),
        load=params.load,
        mean_idle=mean_idle_period(params),
    )


def limit_check(params: SwarmParams, which: str) -> LimitDiagnostic:
    """Sweep mu or lambda through 10^0..10^6 times its value and check the trend.

    mu -> inf: B must fall strictly toward s/mu, with B/(s/mu) -> 1.
    lambda -> inf: B must rise strictly; hitting the overflow ceiling ends the
    sweep and is accepted. A zero lambda is swept from 1.
    """
    if which not in LIMIT_SELECTORS:
        raise InvalidParameterError(f"which must be one of {LIMIT_SELECTORS}, got {which!r}")

    multipliers = [10.0 ** k for k in range(LIMIT_DECADES)]
    diag = LimitDiagnostic(which=which, multipliers=[], swept_values=[], busy_periods=[])

    for m in multipliers:
        if which == MU_TO_INFINITY:
            swept = params.mu * m
            swept_params = params.with_(mu=swept)
        else:
            swept = (params.lam if params.lam > 0 else 1.0) * m
            swept_params = params.with_(lam=swept)
        try:
            b = expected_busy_period(swept_params)
        except BusyPeriodOverflowError:
            log.info(f"[{which}] overflow at multiplier {m:g}; sweep stops here")
            diag.overflow_at = m
            break
        diag.multipliers.append(m)
        diag.swept_values.append(swept)
        diag.busy_periods.append(b)
        if which == MU_TO_INFINITY:
            diag.ratios_to_residence.append(b / swept_params.residence)

    steps = np.diff(diag.busy_periods)
    if which == MU_TO_INFINITY:
        diag.holds = bool(
            len(diag.busy_periods) == LIMIT_DECADES
            and np.all(steps < 0)
            and abs(diag.ratios_to_residence[-1] - 1.0) < LIMIT_RATIO_TOL
        )
    else:
        diag.holds = bool(np.all(steps > 0))
    return diag


def solve_peer_rate(s: float, mu: float, r: float, target_fraction: float) -> float:
    """Peer arrival rate at which availability_fraction hits `target_fraction`.

    Bisection on lambda between 0 and the rate that puts x at the overflow
    ceiling; availability_fraction is strictly increasing in lambda there.
    """
    if not 0.0 < target_fraction < 1.0:
        raise InvalidParameterError(f"target fraction must lie in (0, 1), got {target_fraction!r}")
    base = SwarmParams(s=s, mu=mu, r=r, lam=0.0)
    floor = availability_fraction(base)
    if target_fraction < floor:
        raise InvalidParameterError(
            f"target {target_fraction:.6g} is below the publishers-only fraction {floor:.6g}"
        )
    if target_fraction == floor:
        return 0.0

    # stay a hair inside the ceiling so rounding cannot push x over it
    lam_max = (OVERFLOW_EXPONENT * mu / s - r) * (1.0 - 1e-9)
    if lam_max <= 0:
        raise InvalidParameterError("publishers alone already exceed the overflow ceiling")

    def gap(lam: float) -> float:
        return availability_fraction(base.with_(lam=lam)) - target_fraction

    lam = optimize.bisect(gap, 0.0, lam_max, xtol=1e-12, maxiter=400)
    log.info(f"[bisection] lambda={lam:.9g} gives availability {target_fraction:.6g}")
    return float(lam)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="[%(levelname)s] %(message)s")
    print("x        B           factor      availability")
    for lam in (0.0, 0.3, 0.8, 1.0, 1.8, 2.8):
        p = SwarmParams(s=1.0, mu=1.0, r=0.2, lam=lam)
        rep = analytic_report(p)
        print(f"{rep.load:<8.3g} {rep.busy_period:<11.6g} {rep.bundling_factor:<11.6g} "
              f"{rep.availability_fraction:.6g}")
