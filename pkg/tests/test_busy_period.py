import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from busy_period import (
    LAMBDA_TO_INFINITY,
    MU_TO_INFINITY,
    SwarmParams,
    analytic_report,
    availability_fraction,
    bundling_factor,
    expected_busy_period,
    limit_check,
    solve_peer_rate,
)
from swarm_errors import BusyPeriodOverflowError, InvalidParameterError

sizes = st.floats(min_value=0.01, max_value=2.0)
speeds = st.floats(min_value=0.5, max_value=10.0)
pub_rates = st.floats(min_value=0.01, max_value=5.0)
peer_rates = st.floats(min_value=0.0, max_value=5.0)
bumps = st.floats(min_value=0.01, max_value=2.0)
factors = st.floats(min_value=1.01, max_value=3.0)


@st.composite
def swarm_params(draw):
    return SwarmParams(s=draw(sizes), mu=draw(speeds), r=draw(pub_rates), lam=draw(peer_rates))


def test_busy_period_reference_value(reference_params):
    assert expected_busy_period(reference_params) == pytest.approx(1.933431, abs=1e-6)


def test_busy_period_small_load_matches_residence():
    p = SwarmParams(s=1e-9, mu=1.0, r=0.5, lam=0.5)
    assert expected_busy_period(p) == pytest.approx(1e-9, rel=1e-6)


def test_doubling_size_multiplies_by_bundling_factor(reference_params):
    single = expected_busy_period(reference_params)
    double = expected_busy_period(reference_params.with_(s=2.0))
    assert double == pytest.approx(single * (math.exp(1.2) + 1.0), rel=1e-12)
    assert double == pytest.approx(8.352650, abs=1e-5)


def test_publishers_only_swarm_is_legal():
    p = SwarmParams(s=1.0, mu=1.0, r=0.2, lam=0.0)
    assert expected_busy_period(p) == pytest.approx(math.expm1(0.2) / 0.2, rel=1e-12)


def test_bundling_factor_at_ln2_is_three():
    p = SwarmParams(s=math.log(2.0), mu=1.0, r=0.5, lam=0.5)
    assert abs(bundling_factor(p) - 3.0) < 1e-12


def test_bundling_factor_tends_to_two():
    p = SwarmParams(s=1e-12, mu=1.0, r=0.5, lam=0.5)
    assert bundling_factor(p) == pytest.approx(2.0, abs=1e-6)


def test_bundling_factor_reference_and_ratio_form(reference_params):
    factor = bundling_factor(reference_params)
    assert factor == pytest.approx(4.320117, abs=1e-5)
    assert factor == pytest.approx(math.expm1(2.4) / math.expm1(1.2), rel=1e-13)


def test_availability_reference_value(reference_params):
    assert availability_fraction(reference_params) == pytest.approx(0.278856, abs=1e-5)


def test_availability_grows_toward_one_with_publisher_rate():
    fractions = [availability_fraction(SwarmParams(s=1.0, mu=1.0, r=r, lam=1.0)) for r in (1, 10, 100)]
    assert fractions[0] < fractions[1] <= fractions[2]
    assert fractions[2] > 0.999


def test_availability_one_half_when_busy_equals_idle():
    lam = solve_peer_rate(1.0, 1.0, 0.2, 0.5)
    p = SwarmParams(s=1.0, mu=1.0, r=0.2, lam=lam)
    assert expected_busy_period(p) == pytest.approx(5.0, rel=1e-8)
    assert availability_fraction(p) == pytest.approx(0.5, abs=1e-9)


def test_bisection_reaches_low_availability_at_small_publisher_rate():
    lam = solve_peer_rate(1.0, 1.0, 0.01, 0.1)
    assert lam > 0
    assert availability_fraction(SwarmParams(1.0, 1.0, 0.01, lam)) == pytest.approx(0.1, abs=1e-9)


def test_bisection_rejects_unreachable_targets():
    with pytest.raises(InvalidParameterError):
        solve_peer_rate(1.0, 1.0, 0.01, 0.001)
    with pytest.raises(InvalidParameterError):
        solve_peer_rate(1.0, 1.0, 0.01, 1.0)


def test_analytic_report_bundles_all_quantities(reference_params):
    rep = analytic_report(reference_params)
    assert rep.load == pytest.approx(1.2)
    assert rep.mean_idle == pytest.approx(5.0)
    assert rep.busy_period > 0
    assert rep.bundling_factor > 2
    assert 0 < rep.availability_fraction < 1


@pytest.mark.parametrize("fields", [
    dict(s=0.0, mu=1.0, r=0.2, lam=1.0),
    dict(s=-1.0, mu=1.0, r=0.2, lam=1.0),
    dict(s=1.0, mu=0.0, r=0.2, lam=1.0),
    dict(s=1.0, mu=1.0, r=0.0, lam=1.0),
    dict(s=1.0, mu=1.0, r=0.2, lam=-0.1),
    dict(s=float("nan"), mu=1.0, r=0.2, lam=1.0),
    dict(s=1.0, mu=float("inf"), r=0.2, lam=1.0),
])
def test_invalid_parameters_rejected(fields):
    with pytest.raises(InvalidParameterError):
        SwarmParams(**fields)


def test_overflow_is_reported_not_infinite():
    p = SwarmParams(s=1.0, mu=1.0, r=0.2, lam=700.0)
    with pytest.raises(BusyPeriodOverflowError) as err:
        expected_busy_period(p)
    assert err.value.load == pytest.approx(700.2)
    with pytest.raises(OverflowError):
        bundling_factor(p)


def test_mu_limit_converges_to_residence():
    diag = limit_check(SwarmParams(s=1.0, mu=1.0, r=0.2, lam=1.0), MU_TO_INFINITY)
    assert diag.holds
    assert diag.busy_periods[-1] == pytest.approx(1e-6, rel=1e-4)
    assert 0.999999 <= diag.ratios_to_residence[-1] <= 1.000001


def test_lambda_limit_increases_until_overflow():
    diag = limit_check(SwarmParams(s=1.0, mu=1.0, r=0.2, lam=1.0), LAMBDA_TO_INFINITY)
    assert diag.holds
    assert diag.swept_values[:3] == [1.0, 10.0, 100.0]
    assert diag.busy_periods[0] < diag.busy_periods[1] < diag.busy_periods[2]
    assert diag.overflow_at == 1000.0


def test_lambda_limit_on_overflowing_base_reports_instead_of_crashing():
    diag = limit_check(SwarmParams(s=1.0, mu=1.0, r=0.2, lam=700.0), LAMBDA_TO_INFINITY)
    assert diag.overflow_at == 1.0
    assert diag.busy_periods == []


def test_limit_check_rejects_unknown_selector(reference_params):
    with pytest.raises(InvalidParameterError):
        limit_check(reference_params, "s_to_infinity")


@settings(deadline=None)
@given(swarm_params(), factors, bumps)
def test_busy_period_monotone_in_every_parameter(p, factor, bump):
    b = expected_busy_period(p)
    assert expected_busy_period(p.with_(s=p.s * factor)) > b
    assert expected_busy_period(p.with_(r=p.r + bump)) > b
    assert expected_busy_period(p.with_(lam=p.lam + bump)) > b
    assert expected_busy_period(p.with_(mu=p.mu * factor)) < b


@settings(max_examples=1000, deadline=None)
@given(swarm_params())
def test_bundling_is_superadditive(p):
    assert expected_busy_period(p.with_(s=2 * p.s)) > 2 * expected_busy_period(p)


@settings(deadline=None)
@given(swarm_params())
def test_bundling_identity(p):
    doubled = expected_busy_period(p.with_(s=2 * p.s))
    assert bundling_factor(p) * expected_busy_period(p) == pytest.approx(doubled, rel=1e-9)


@st.composite
def modest_params(draw):
    # keeps x small enough that B/(B+1/r) stays resolvable below 1.0
    return SwarmParams(
        s=draw(st.floats(0.01, 1.0)), mu=draw(st.floats(1.0, 10.0)),
        r=draw(st.floats(0.01, 2.0)), lam=draw(st.floats(0.0, 3.0)),
    )


@settings(deadline=None)
@given(modest_params(), bumps)
def test_availability_increases_with_publisher_rate(p, bump):
    a = availability_fraction(p)
    assert 0.0 < a < 1.0
    assert availability_fraction(p.with_(r=p.r + bump)) > a
