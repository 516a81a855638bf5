import heapq
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from tqdm import tqdm

from busy_period import SwarmParams
from swarm_errors import InvalidParameterError, SimulationError
from swarm_stats import SampleSummary, ratio_half_width, sample_summary

"""
Discrete-event simulation of swarm busy periods.

A busy period opens when a publisher arrives into an empty swarm. While it
lasts, publishers and peers arrive at combined rate r+lambda and each holds the
content for an independent residence of mean s/mu (fixed, or exponential).
It closes when the last holder leaves. Peers arriving into an empty swarm
leave at once.

Every replication owns its own PCG64 stream, keyed by numpy's SeedSequence
with the replication index as spawn key, so serial and parallel runs agree
exactly and no two master seeds share a stream.

run_busy_periods does not walk the idle gap event by event: its length is one
Exp(r) draw and the peers it turns away are a single Poisson(lambda * gap)
count, so peer_rejected events only appear in profile runs.

run_profile_sim covers time-varying rates with per-segment sampling: inside a
segment arrivals are Poisson at that segment's rates, and the pending
inter-arrival draw is discarded at each boundary (memorylessness makes this
exact).
"""

log = logging.getLogger(__name__)

# ---------------------------
# Defaults
# ---------------------------
DEFAULT_REPLICATIONS = 10_000
DEFAULT_MAX_EVENTS = 1_000_000
# Uniforms are pulled from numpy in blocks and served one by one
UNIFORM_BLOCK = 256
# Default sampling resolution of profile runs, as a fraction of the horizon
PROFILE_POINTS = 500

DETERMINISTIC = "deterministic"
EXPONENTIAL = "exponential"
SERVICE_DISTRIBUTIONS = (DETERMINISTIC, EXPONENTIAL)

PUBLISHER_ARRIVAL = "publisher_arrival"
PEER_ARRIVAL = "peer_arrival"
HOLDER_DEPARTURE = "holder_departure"
CONTENT_LOST = "content_lost"
PEER_REJECTED = "peer_rejected"

TRACE_COLUMNS = ["period", "seq", "time", "kind", "holders_after"]

_MASK64 = (1 << 64) - 1
_ARRIVAL = 1
_DEPARTURE = 0


def splitmix64(value: int) -> int:
    """SplitMix64 finaliser; spreads nearby seeds over the whole 64-bit space."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def replication_seed(seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(index,))


def derive_seed(seed: int, stream: int) -> int:
    """Seed of an independent experiment derived from a master seed."""
    return splitmix64((seed + stream * 0xD1B54A32D192ED03) & _MASK64)


@dataclass(frozen=True)
class SimConfig:
    seed: int
    replications: int = DEFAULT_REPLICATIONS
    service_distribution: str = EXPONENTIAL
    record_events: bool = False
    max_events_per_period: int = DEFAULT_MAX_EVENTS
    workers: int = 1
    progress: bool = False

    def __post_init__(self):
        if not isinstance(self.seed, int) or not 0 <= self.seed <= _MASK64:
            raise InvalidParameterError(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.replications < 1:
            raise InvalidParameterError(f"replications must be >= 1, got {self.replications!r}")
        if self.service_distribution not in SERVICE_DISTRIBUTIONS:
            raise InvalidParameterError(
                f"service_distribution must be one of {SERVICE_DISTRIBUTIONS}, "
                f"got {self.service_distribution!r}"
            )
        if self.max_events_per_period < 2:
            raise InvalidParameterError(
                f"max_events_per_period must be >= 2, got {self.max_events_per_period!r}"
            )
        if self.workers < 1:
            raise InvalidParameterError(f"workers must be >= 1, got {self.workers!r}")


class SimEvent(NamedTuple):
    time: float
    kind: str
    holders_after: int


@dataclass
class BusyPeriodStats:
    n: int
    mean: float
    variance: float
    ci_half_width_95: float
    truncated_count: int
    mean_idle: float
    busy_share: float
    rejected_peers: int
    # replication index -> events of that busy period (record_events only)
    traces: Dict[int, List[SimEvent]] = field(default_factory=dict)

    @property
    def standard_error(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n > 1 else math.inf

    def contains(self, value: float) -> bool:
        return abs(self.mean - value) <= self.ci_half_width_95

    def as_summary(self) -> SampleSummary:
        return SampleSummary(n=self.n, mean=self.mean, variance=self.variance,
                             ci_half_width=self.ci_half_width_95)


@dataclass(frozen=True)
class ArrivalProfile:
    """Piecewise-constant publisher/peer rates.

    segments holds (duration, publisher_rate, peer_rate). Constant mode has a
    single unbounded segment. In piecewise mode the last segment carries on
    past its duration if the horizon is longer.
    """

    mode: str
    segments: Tuple[Tuple[float, float, float], ...]

    def __post_init__(self):
        if self.mode not in ("constant", "piecewise"):
            raise InvalidParameterError(f"profile mode must be constant or piecewise, got {self.mode!r}")
        if len(self.segments) == 0:
            raise InvalidParameterError("profile needs at least one segment")
        for duration, r, lam in self.segments:
            for name, rate in (("publisher_rate", r), ("peer_rate", lam)):
                if not math.isfinite(rate) or rate < 0:
                    raise InvalidParameterError(f"{name} must be finite and >= 0, got {rate!r}")
            if self.mode == "piecewise" and (not math.isfinite(duration) or duration <= 0):
                raise InvalidParameterError(f"segment duration must be finite and > 0, got {duration!r}")
        if self.mode == "constant" and (len(self.segments) != 1 or math.isfinite(self.segments[0][0])):
            raise InvalidParameterError("constant profile has exactly one unbounded segment")

    @classmethod
    def constant(cls, publisher_rate: float, peer_rate: float) -> "ArrivalProfile":
        return cls("constant", ((math.inf, float(publisher_rate), float(peer_rate)),))

    @classmethod
    def piecewise(cls, segments: Iterable[Sequence[float]]) -> "ArrivalProfile":
        return cls("piecewise", tuple((float(d), float(r), float(lam)) for d, r, lam in segments))

    def bounds(self, horizon: float) -> List[Tuple[float, float, float, float]]:
        """(start, end, publisher_rate, peer_rate) per segment, clipped to [0, horizon]."""
        out = []
        start = 0.0
        for i, (duration, r, lam) in enumerate(self.segments):
            last = i == len(self.segments) - 1
            end = horizon if last else min(start + duration, horizon)
            out.append((start, end, r, lam))
            start = end
            if start >= horizon:
                break
        return out


@dataclass
class ProfileRun:
    series: pd.DataFrame
    busy_periods: List[float]
    peak_holders: int
    peak_time: float
    total_rejected: int
    events: Optional[List[SimEvent]] = None


@dataclass(frozen=True)
class BundleComparison:
    b_single_2s: float
    b_two_of_s_sum: float
    ratio: float
    ratio_ci_half_width_95: float
    double: BusyPeriodStats
    first: BusyPeriodStats
    second: BusyPeriodStats


class _UniformStream:
    """Uniforms on (0, 1] from a PCG64 stream, fetched a block at a time."""

    def __init__(self, seed: Union[int, np.random.SeedSequence]):
        self.gen = np.random.Generator(np.random.PCG64(seed))
        self._block: List[float] = []
        self._pos = 0

    def uniform(self) -> float:
        if self._pos == len(self._block):
            # 1 - [0, 1) is (0, 1], so log() below never sees zero
            self._block = (1.0 - self.gen.random(UNIFORM_BLOCK)).tolist()
            self._pos = 0
        u = self._block[self._pos]
        self._pos += 1
        return u

    def exponential(self, rate: float) -> float:
        return -math.log(self.uniform()) / rate


class _Replica(NamedTuple):
    index: int
    duration: Optional[float]
    idle: float
    rejected: int
    events: Optional[List[SimEvent]]


def _residence_sampler(stream: _UniformStream, mean: float, distribution: str):
    if distribution == EXPONENTIAL:
        return lambda: -mean * math.log(stream.uniform())
    return lambda: mean


def _simulate_period(
    params: SwarmParams, config: SimConfig, stream: _UniformStream
) -> Tuple[Optional[float], Optional[List[SimEvent]]]:
    """One busy period from the opening publisher arrival at t=0. None means truncated."""
    total = params.total_rate
    publisher_share = params.r / total
    residence = _residence_sampler(stream, params.residence, config.service_distribution)
    events: Optional[List[SimEvent]] = [] if config.record_events else None

    # (time, seq, what): ties resolved by insertion order
    heap: List[Tuple[float, int, int]] = []
    heapq.heappush(heap, (residence(), 0, _DEPARTURE))
    heapq.heappush(heap, (stream.exponential(total), 1, _ARRIVAL))
    seq = 2
    holders = 1
    count = 1
    if events is not None:
        events.append(SimEvent(0.0, PUBLISHER_ARRIVAL, 1))

    while count < config.max_events_per_period:
        t, _, what = heapq.heappop(heap)
        count += 1
        if what == _DEPARTURE:
            holders -= 1
            if holders == 0:
                if events is not None:
                    events.append(SimEvent(t, CONTENT_LOST, 0))
                return t, events
            if events is not None:
                events.append(SimEvent(t, HOLDER_DEPARTURE, holders))
            continue
        kind = PUBLISHER_ARRIVAL if stream.uniform() <= publisher_share else PEER_ARRIVAL
        holders += 1
        heapq.heappush(heap, (t + residence(), seq, _DEPARTURE))
        heapq.heappush(heap, (t + stream.exponential(total), seq + 1, _ARRIVAL))
        seq += 2
        if events is not None:
            events.append(SimEvent(t, kind, holders))
    return None, events


def _replicate(params: SwarmParams, config: SimConfig, index: int) -> _Replica:
    stream = _UniformStream(replication_seed(config.seed, index))
    duration, events = _simulate_period(params, config, stream)
    # idle gap that follows, ended by the next publisher
    idle = stream.exponential(params.r)
    rejected = int(stream.gen.poisson(params.lam * idle)) if params.lam > 0 else 0
    return _Replica(index, duration, idle, rejected, events)


def _run_indices(params: SwarmParams, config: SimConfig, indices: Sequence[int]) -> List[_Replica]:
    return [_replicate(params, config, i) for i in indices]


def _run_batch(params: SwarmParams, config: SimConfig, start: int, stop: int) -> List[_Replica]:
    indices = list(range(start, stop))
    if config.workers == 1 or len(indices) < 2 * config.workers:
        return _run_indices(params, config, indices)
    chunks = [list(c) for c in np.array_split(indices, config.workers) if len(c)]
    parts = Parallel(n_jobs=config.workers)(
        delayed(_run_indices)(params, config, [int(i) for i in chunk]) for chunk in chunks
    )
    return [rep for part in parts for rep in part]


def run_busy_periods(params: SwarmParams, config: SimConfig) -> BusyPeriodStats:
    """Simulate until exactly config.replications busy periods have completed.

    Periods that hit max_events_per_period are counted in truncated_count and
    replaced by further replication indices; more truncations than requested
    replications is an error.
    """
    needed = config.replications
    durations: List[float] = []
    idles: List[float] = []
    rejected = 0
    truncated = 0
    traces: Dict[int, List[SimEvent]] = {}
    next_index = 0

    with tqdm(total=needed, desc="Busy periods", ncols=100, disable=not config.progress) as bar:
        while len(durations) < needed:
            start, next_index = next_index, next_index + needed - len(durations)
            for rep in _run_batch(params, config, start, next_index):
                idles.append(rep.idle)
                rejected += rep.rejected
                if rep.duration is None:
                    truncated += 1
                    continue
                durations.append(rep.duration)
                if rep.events is not None:
                    traces[rep.index] = rep.events
                bar.update(1)
            if truncated > needed:
                raise SimulationError(
                    f"{truncated} periods exceeded {config.max_events_per_period} events; "
                    "raise max_events_per_period or lower the load"
                )

    if truncated:
        log.info(f"[sim] {truncated} truncated periods excluded from the mean")
    summary = sample_summary(durations)
    mean_idle = float(np.mean(idles))
    log.info(f"[sim] n={summary.n} mean={summary.mean:.6g} +/- {summary.ci_half_width:.3g}")
    return BusyPeriodStats(
        n=summary.n,
        mean=summary.mean,
        variance=summary.variance,
        ci_half_width_95=summary.ci_half_width,
        truncated_count=truncated,
        mean_idle=mean_idle,
        busy_share=summary.mean / (summary.mean + mean_idle),
        rejected_peers=rejected,
        traces=traces,
    )


def event_trace_frame(traces: Dict[int, List[SimEvent]]) -> pd.DataFrame:
    rows = [
        (period, seq, ev.time, ev.kind, ev.holders_after)
        for period in sorted(traces)
        for seq, ev in enumerate(traces[period])
    ]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def write_event_trace(traces: Dict[int, List[SimEvent]], path) -> None:
    """CSV `period,seq,time,kind,holders_after`, times with 9 significant digits."""
    frame = event_trace_frame(traces)
    frame.to_csv(path, index=False, float_format="%.9g")
    log.info(f"[sim] wrote {len(frame):,} events to {path}")


def run_profile_sim(
    params: SwarmParams,
    profile: ArrivalProfile,
    horizon: float,
    config: SimConfig,
    step: Optional[float] = None,
) -> ProfileRun:
    """One swarm over [0, horizon] under time-varying rates.

    Only s and mu are taken from params; the rates come from the profile.
    The holder count is sampled every `step` time units (horizon/500 by default).
    """
    if not math.isfinite(horizon) or horizon <= 0:
        raise InvalidParameterError(f"horizon must be finite and > 0, got {horizon!r}")
    if step is None:
        step = horizon / PROFILE_POINTS
    if not math.isfinite(step) or step <= 0:
        raise InvalidParameterError(f"step must be finite and > 0, got {step!r}")

    stream = _UniformStream(replication_seed(config.seed, 0))
    residence = _residence_sampler(stream, params.residence, config.service_distribution)
    departures: List[float] = []
    holders = 0
    rejected = 0
    times, counts, rejects = [0.0], [0], [0]
    events: Optional[List[SimEvent]] = [] if config.record_events else None
    busy: List[float] = []
    busy_start = 0.0
    peak, peak_time = 0, 0.0

    def mark(t: float, kind: str) -> None:
        times.append(t)
        counts.append(holders)
        rejects.append(rejected)
        if events is not None:
            events.append(SimEvent(t, kind, holders))

    def drain(limit: float) -> None:
        nonlocal holders
        while departures and departures[0] <= limit:
            t = heapq.heappop(departures)
            holders -= 1
            if holders == 0:
                busy.append(t - busy_start)
            mark(t, CONTENT_LOST if holders == 0 else HOLDER_DEPARTURE)

    for start, end, r_k, lam_k in profile.bounds(horizon):
        rate = r_k + lam_k
        t = start
        while True:
            t_next = t + stream.exponential(rate) if rate > 0 else math.inf
            drain(min(t_next, end))
            if t_next >= end:
                break
            t = t_next
            is_publisher = stream.uniform() <= r_k / rate
            if not is_publisher and holders == 0:
                rejected += 1
                mark(t, PEER_REJECTED)
                continue
            if holders == 0:
                busy_start = t
            holders += 1
            heapq.heappush(departures, t + residence())
            if holders > peak:
                peak, peak_time = holders, t
            mark(t, PUBLISHER_ARRIVAL if is_publisher else PEER_ARRIVAL)

    grid = np.append(np.arange(0.0, horizon, step), horizon)
    idx = np.searchsorted(np.asarray(times), grid, side="right") - 1
    series = pd.DataFrame({
        "time": grid,
        "holders": np.asarray(counts)[idx],
        "cumulative_rejected": np.asarray(rejects)[idx],
    })
    log.info(f"[profile] {len(busy)} completed busy periods, peak {peak} holders at t={peak_time:.4g}")
    return ProfileRun(
        series=series,
        busy_periods=busy,
        peak_holders=peak,
        peak_time=peak_time,
        total_rejected=rejected,
        events=events,
    )


def compare_bundle(params: SwarmParams, config: SimConfig) -> BundleComparison:
    """Simulated B(2s) against B(s) + B(s) from two independently seeded runs."""
    double = run_busy_periods(params.with_(s=2.0 * params.s), config)
    first = run_busy_periods(params, replace(config, seed=derive_seed(config.seed, 1)))
    second = run_busy_periods(params, replace(config, seed=derive_seed(config.seed, 2)))
    pair_sum = first.mean + second.mean
    pair_se = math.sqrt(first.standard_error ** 2 + second.standard_error ** 2)
    ratio = double.mean / pair_sum
    return BundleComparison(
        b_single_2s=double.mean,
        b_two_of_s_sum=pair_sum,
        ratio=ratio,
        ratio_ci_half_width_95=ratio_half_width(double.mean, double.standard_error, pair_sum, pair_se),
        double=double,
        first=first,
        second=second,
    )


if __name__ == "__main__":
    from busy_period import expected_busy_period

    logging.basicConfig(level=logging.INFO, format="[%(levelname)s] %(message)s")
    p = SwarmParams(s=1.0, mu=1.0, r=0.2, lam=1.0)
    stats = run_busy_periods(p, SimConfig(seed=42, replications=20_000, progress=True))
    print(f"simulated B={stats.mean:.6f} +/- {stats.ci_half_width_95:.6f}; "
          f"analytic B={expected_busy_period(p):.6f}")
