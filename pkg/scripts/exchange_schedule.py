import logging
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, NamedTuple, Set, Tuple

import pandas as pd

from swarm_errors import CausalityViolationError, InvalidParameterError

"""
Chunk-exchange schedule for one seeder, n cooperating leechers and optional
free-riders.

Node 0 is the seeder, 1..n are leechers and n+1..n+F are free-riders. The file
is cut into n chunks of size 1/n.
  round 1: the seeder sends chunk k to leecher k (one full copy in total)
  round 2: each leecher sends its chunk to the n-1 other leechers
  round 3: leechers serve every chunk to every free-rider, round-robin over
           (free-rider, chunk) pairs
A chunk received in round t can be forwarded from round t+1 on.

Uploads are exact Fractions in copy-equivalents.
"""

log = logging.getLogger(__name__)

SEEDER = 0
SCHEDULE_COLUMNS = ["round", "sender", "receiver", "chunk"]


class Transfer(NamedTuple):
    round: int
    sender: int
    receiver: int
    chunk: int
    fraction: Fraction


@dataclass(frozen=True)
class ExchangeSchedule:
    n: int
    free_riders: int
    transfers: Tuple[Transfer, ...]

    @property
    def chunks(self) -> int:
        return self.n

    @property
    def node_count(self) -> int:
        return 1 + self.n + self.free_riders

    def role(self, node: int) -> str:
        if node == SEEDER:
            return "seeder"
        return "leecher" if node <= self.n else "free_rider"


@dataclass(frozen=True)
class ScheduleReport:
    n: int
    free_riders: int
    uploads: Tuple[Fraction, ...]
    downloads: Tuple[Fraction, ...]
    complete: Tuple[bool, ...]
    seeder_upload: Fraction
    max_leecher_upload: Fraction
    max_free_rider_upload: Fraction
    expected_leecher_budget: Fraction

    @property
    def incomplete_nodes(self) -> List[int]:
        return [node for node, done in enumerate(self.complete) if not done]

    @property
    def all_complete(self) -> bool:
        return all(self.complete)

    @property
    def budget_ok(self) -> bool:
        """Seeder gave one copy, leechers exactly (n-1+F)/n, free-riders nothing."""
        return (
            self.seeder_upload == 1
            and self.max_leecher_upload == self.expected_leecher_budget
            and self.max_free_rider_upload == 0
        )


def _check_counts(n: int, free_riders: int) -> None:
    if not isinstance(n, int) or n < 1:
        raise InvalidParameterError(f"n must be a positive integer, got {n!r}")
    if not isinstance(free_riders, int) or free_riders < 0:
        raise InvalidParameterError(f"free_riders must be a nonnegative integer, got {free_riders!r}")
    if free_riders > n:
        raise InvalidParameterError(
            f"free_riders={free_riders} exceeds n={n}; serving more free-riders than "
            "cooperating leechers is not supported"
        )


def build_schedule(n: int, free_riders: int = 0) -> ExchangeSchedule:
    _check_counts(n, free_riders)
    part = Fraction(1, n)
    leechers = range(1, n + 1)
    transfers: List[Transfer] = []

    for k in leechers:
        transfers.append(Transfer(1, SEEDER, k, k, part))

    for k in leechers:
        for j in leechers:
            if j != k:
                transfers.append(Transfer(2, k, j, k, part))

    # every leecher holds every chunk after round 2
    for f in range(free_riders):
        rider = n + 1 + f
        for chunk in leechers:
            pair = f * n + (chunk - 1)
            transfers.append(Transfer(3, pair % n + 1, rider, chunk, part))

    log.info(f"[schedule] n={n} free_riders={free_riders}: {len(transfers)} transfers")
    return ExchangeSchedule(n=n, free_riders=free_riders, transfers=tuple(transfers))


def _check_structure(schedule: ExchangeSchedule) -> None:
    _check_counts(schedule.n, schedule.free_riders)
    part = Fraction(1, schedule.chunks)
    for t in schedule.transfers:
        if t.round < 1:
            raise InvalidParameterError(f"{t}: rounds start at 1")
        for node in (t.sender, t.receiver):
            if not 0 <= node < schedule.node_count:
                raise InvalidParameterError(f"{t}: node {node} is not in 0..{schedule.node_count - 1}")
        if t.sender == t.receiver:
            raise InvalidParameterError(f"{t}: sender and receiver are the same node")
        if not 1 <= t.chunk <= schedule.chunks:
            raise InvalidParameterError(f"{t}: chunk {t.chunk} is not in 1..{schedule.chunks}")
        if t.fraction != part:
            raise InvalidParameterError(f"{t}: every transfer moves exactly 1/{schedule.n} of the file")


def verify_schedule(schedule: ExchangeSchedule) -> ScheduleReport:
    """Replay round by round; a send is legal only if the sender held the chunk when the round began."""
    _check_structure(schedule)
    n, chunks = schedule.n, schedule.chunks
    holdings: List[Set[int]] = [set() for _ in range(schedule.node_count)]
    holdings[SEEDER] = set(range(1, chunks + 1))
    uploads = [Fraction(0)] * schedule.node_count
    downloads = [Fraction(0)] * schedule.node_count

    by_round: Dict[int, List[Transfer]] = defaultdict(list)
    for t in schedule.transfers:
        by_round[t.round].append(t)

    for rnd in sorted(by_round):
        received = []
        for t in by_round[rnd]:
            if t.chunk not in holdings[t.sender]:
                raise CausalityViolationError(
                    t, f"round {rnd}: node {t.sender} sends chunk {t.chunk} it does not hold yet"
                )
            uploads[t.sender] += t.fraction
            downloads[t.receiver] += t.fraction
            received.append((t.receiver, t.chunk))
        for node, chunk in received:
            holdings[node].add(chunk)

    complete = tuple(len(held) == chunks for held in holdings)
    leecher_uploads = uploads[1:n + 1]
    rider_uploads = uploads[n + 1:]
    report = ScheduleReport(
        n=n,
        free_riders=schedule.free_riders,
        uploads=tuple(uploads),
        downloads=tuple(downloads),
        complete=complete,
        seeder_upload=uploads[SEEDER],
        max_leecher_upload=max(leecher_uploads),
        max_free_rider_upload=max(rider_uploads, default=Fraction(0)),
        expected_leecher_budget=Fraction(n - 1 + schedule.free_riders, n),
    )
    if report.incomplete_nodes:
        log.info(f"[schedule] incomplete nodes: {report.incomplete_nodes}")
    return report


def schedule_frame(schedule: ExchangeSchedule) -> pd.DataFrame:
    return pd.DataFrame(
        [(t.round, t.sender, t.receiver, t.chunk) for t in schedule.transfers],
        columns=SCHEDULE_COLUMNS,
    )


def write_schedule_csv(schedule: ExchangeSchedule, path) -> None:
    schedule_frame(schedule).to_csv(path, index=False)


def report_to_dict(report: ScheduleReport) -> dict:
    """JSON-ready report: scalar totals plus per-node arrays indexed by node id."""
    nodes = range(len(report.uploads))
    roles = ["seeder" if i == SEEDER else "leecher" if i <= report.n else "free_rider" for i in nodes]
    return {
        "n": report.n,
        "free_riders": report.free_riders,
        "seeder_upload": float(report.seeder_upload),
        "max_leecher_upload": float(report.max_leecher_upload),
        "max_leecher_upload_exact": str(report.max_leecher_upload),
        "expected_leecher_budget": str(report.expected_leecher_budget),
        "all_complete": report.all_complete,
        "budget_ok": report.budget_ok,
        "nodes": {
            "node": list(nodes),
            "role": roles,
            "upload": [float(u) for u in report.uploads],
            "upload_exact": [str(u) for u in report.uploads],
            "download": [float(d) for d in report.downloads],
            "complete": list(report.complete),
        },
    }
