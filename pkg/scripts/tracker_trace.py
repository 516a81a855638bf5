import io
import logging
import re
from dataclasses import dataclass
from datetime import date, datetime
from pathlib import Path
from typing import List, NamedTuple, Optional, Protocol, Tuple

import pandas as pd

from swarm_errors import (
    DivisionDomainError,
    EmptyTraceError,
    InvalidParameterError,
    NegativeCountError,
    TraceOrderError,
    TraceParseError,
)

"""
Tracker traces: timestamped seeder/leecher counts for one swarm.

Two CSV layouts are read:
  timestamp,seeders,leechers      time series, strictly increasing timestamps
  title,date,seeders,leechers     same-day snapshots of several swarms
Timestamps are local ISO-8601 (YYYY-MM-DDTHH:MM:SS, seconds optional) with no
timezone. Line numbers in errors count the header as line 1.
"""

log = logging.getLogger(__name__)

TRACE_COLUMNS = ["timestamp", "seeders", "leechers"]
SNAPSHOT_COLUMNS = ["title", "date", "seeders", "leechers"]
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%S"
MINUTE_FORMAT = "%Y-%m-%dT%H:%M"
DATE_FORMAT = "%Y-%m-%d"
SECONDS_PER_HOUR = 3600.0

_INT_PATTERN = r"-?\d+"


class TraceRecord(NamedTuple):
    timestamp: datetime
    seeders: int
    leechers: int


class SnapshotRecord(NamedTuple):
    title: str
    date: date
    seeders: int
    leechers: int


class SwarmCounts(Protocol):
    seeders: int
    leechers: int


@dataclass(frozen=True)
class SwarmSummary:
    records: int
    peak_seeders: Tuple[datetime, int]
    peak_leechers: Tuple[datetime, int]
    first_observation: TraceRecord
    last_observation: TraceRecord
    seeder_decay_ratio: float
    leecher_decay_ratio: float
    hours_to_peak: float
    hours_to_leecher_peak: float


@dataclass(frozen=True)
class SwarmComparison:
    leecher_ratio: float
    seeder_ratio: float


def _line(row: int) -> int:
    # header is line 1, first data row is line 2
    return row + 2


def _decoded(stream):
    """Text stream for pandas; undecodable bytes become a TraceParseError with their line."""
    if hasattr(stream, "read"):
        return stream
    raw = Path(stream).read_bytes()
    try:
        return io.StringIO(raw.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise TraceParseError(raw[:e.start].count(b"\n") + 1, f"not valid UTF-8 ({e.reason})")


def _read_table(stream, columns: List[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(
            _decoded(stream), dtype=str, keep_default_na=False, skipinitialspace=True,
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError:
        raise TraceParseError(1, f"missing header, expected {','.join(columns)}")
    except pd.errors.ParserError as e:
        found = re.search(r"line (\d+)", str(e))
        raise TraceParseError(int(found.group(1)) if found else 0, f"malformed row ({e})")
    header = [str(c).strip() for c in frame.columns]
    if header != columns:
        raise TraceParseError(1, f"header {','.join(header)} does not match {','.join(columns)}")
    frame.columns = header
    frame = frame.fillna("")
    # rows are kept one per physical line so _line() stays exact
    blank = (frame.astype(str).apply(lambda col: col.str.strip()) == "").all(axis=1)
    if blank.any():
        row = int(blank.to_numpy().nonzero()[0][0])
        raise TraceParseError(_line(row), "blank line")
    return frame


def _parse_counts(frame: pd.DataFrame, column: str) -> pd.Series:
    raw = frame[column].astype(str).str.strip()
    bad = ~raw.str.fullmatch(_INT_PATTERN)
    if bad.any():
        row = int(bad.to_numpy().nonzero()[0][0])
        raise TraceParseError(_line(row), f"{column} value {raw.iloc[row]!r} is not an integer")
    counts = raw.map(int)
    negative = counts < 0
    if negative.any():
        row = int(negative.to_numpy().nonzero()[0][0])
        raise NegativeCountError(_line(row), column, int(counts.iloc[row]))
    return counts


def _parse_timestamps(raw: pd.Series) -> pd.Series:
    raw = raw.astype(str).str.strip()
    ts = pd.to_datetime(raw, format=TIMESTAMP_FORMAT, errors="coerce")
    retry = ts.isna()
    if retry.any():
        ts[retry] = pd.to_datetime(raw[retry], format=MINUTE_FORMAT, errors="coerce")
    bad = ts.isna()
    if bad.any():
        row = int(bad.to_numpy().nonzero()[0][0])
        raise TraceParseError(_line(row), f"timestamp {raw.iloc[row]!r} is not YYYY-MM-DDTHH:MM:SS")
    return ts


def parse_trace(stream) -> List[TraceRecord]:
    """Read a `timestamp,seeders,leechers` CSV (path or text stream) into ordered records."""
    frame = _read_table(stream, TRACE_COLUMNS)
    if frame.empty:
        return []
    ts = _parse_timestamps(frame["timestamp"])
    seeders = _parse_counts(frame, "seeders")
    leechers = _parse_counts(frame, "leechers")

    not_after = ts.diff().iloc[1:] <= pd.Timedelta(0)
    if not_after.any():
        row = int(not_after.to_numpy().nonzero()[0][0]) + 1
        raise TraceOrderError(ts.iloc[row].strftime(TIMESTAMP_FORMAT), _line(row))

    records = [
        TraceRecord(t.to_pydatetime(), int(s), int(lc))
        for t, s, lc in zip(ts, seeders, leechers)
    ]
    log.info(f"[trace] parsed {len(records)} records")
    return records


def parse_snapshots(stream) -> List[SnapshotRecord]:
    """Read a `title,date,seeders,leechers` CSV; rows may share a date."""
    frame = _read_table(stream, SNAPSHOT_COLUMNS)
    if frame.empty:
        return []
    raw_dates = frame["date"].astype(str).str.strip()
    dates = pd.to_datetime(raw_dates, format=DATE_FORMAT, errors="coerce")
    bad = dates.isna()
    if bad.any():
        row = int(bad.to_numpy().nonzero()[0][0])
        raise TraceParseError(_line(row), f"date {raw_dates.iloc[row]!r} is not YYYY-MM-DD")
    seeders = _parse_counts(frame, "seeders")
    leechers = _parse_counts(frame, "leechers")
    return [
        SnapshotRecord(str(title).strip(), d.date(), int(s), int(lc))
        for title, d, s, lc in zip(frame["title"], dates, seeders, leechers)
    ]


def sniff_layout(path) -> str:
    """'snapshot' if the header starts with title, else 'trace'."""
    # undecodable bytes are left for _read_table to report with a line number
    with open(path, "r", encoding="utf-8", errors="replace") as f:
        header = f.readline().strip().lower()
    return "snapshot" if header.startswith("title") else "trace"


def trace_frame(records: List[TraceRecord]) -> pd.DataFrame:
    return pd.DataFrame(records, columns=TRACE_COLUMNS)


def render_trace(records: List[TraceRecord], stream=None) -> Optional[str]:
    """CSV writer matching parse_trace; returns the text when no stream is given."""
    frame = trace_frame(records)
    frame["timestamp"] = [r.timestamp.strftime(TIMESTAMP_FORMAT) for r in records]
    if stream is None:
        buf = io.StringIO()
        frame.to_csv(buf, index=False, lineterminator="\n")
        return buf.getvalue()
    frame.to_csv(stream, index=False, lineterminator="\n")
    return None


def _decay(last: int, peak: int) -> float:
    # a swarm that never had anyone has nothing to decay from
    return 1.0 if peak == 0 else last / peak


def summarize(records: List[TraceRecord], formation_time: datetime) -> SwarmSummary:
    """Peaks (earliest wins ties), decay since the peak, and hours from formation to the seeder peak."""
    if not records:
        raise EmptyTraceError("cannot summarise an empty trace")
    if formation_time > records[0].timestamp:
        raise InvalidParameterError(
            f"formation time {formation_time:{TIMESTAMP_FORMAT}} is after the first observation "
            f"{records[0].timestamp:{TIMESTAMP_FORMAT}}"
        )
    frame = trace_frame(records)
    # idxmax returns the first maximum, i.e. the earliest timestamp
    top_s = records[int(frame["seeders"].idxmax())]
    top_l = records[int(frame["leechers"].idxmax())]
    last = records[-1]

    def hours(ts: datetime) -> float:
        return (ts - formation_time).total_seconds() / SECONDS_PER_HOUR

    return SwarmSummary(
        records=len(records),
        peak_seeders=(top_s.timestamp, top_s.seeders),
        peak_leechers=(top_l.timestamp, top_l.leechers),
        first_observation=records[0],
        last_observation=last,
        seeder_decay_ratio=_decay(last.seeders, top_s.seeders),
        leecher_decay_ratio=_decay(last.leechers, top_l.leechers),
        hours_to_peak=hours(top_s.timestamp),
        hours_to_leecher_peak=hours(top_l.timestamp),
    )


def compare_swarms(a: SwarmCounts, b: SwarmCounts) -> SwarmComparison:
    """Counts of swarm a relative to swarm b."""
    if b.leechers <= 0 or b.seeders <= 0:
        raise DivisionDomainError(
            f"reference swarm needs positive counts, got seeders={b.seeders} leechers={b.leechers}"
        )
    return SwarmComparison(leecher_ratio=a.leechers / b.leechers, seeder_ratio=a.seeders / b.seeders)


def activity_frame(records: List[TraceRecord], formation_time: datetime) -> pd.DataFrame:
    """Plot-ready columns: hours since formation, seeders, leechers, seeder share."""
    frame = trace_frame(records)
    frame["hours"] = (frame["timestamp"] - formation_time).dt.total_seconds() / SECONDS_PER_HOUR
    total = frame["seeders"] + frame["leechers"]
    frame["seeder_share"] = (frame["seeders"] / total.where(total > 0)).fillna(0.0)
    return frame[["hours", "seeders", "leechers", "seeder_share"]]


def summary_to_dict(summary: SwarmSummary) -> dict:
    """Flat JSON object."""
    return {
        "records": summary.records,
        "peak_seeders_time": summary.peak_seeders[0].strftime(TIMESTAMP_FORMAT),
        "peak_seeders": summary.peak_seeders[1],
        "peak_leechers_time": summary.peak_leechers[0].strftime(TIMESTAMP_FORMAT),
        "peak_leechers": summary.peak_leechers[1],
        "first_time": summary.first_observation.timestamp.strftime(TIMESTAMP_FORMAT),
        "first_seeders": summary.first_observation.seeders,
        "first_leechers": summary.first_observation.leechers,
        "last_time": summary.last_observation.timestamp.strftime(TIMESTAMP_FORMAT),
        "last_seeders": summary.last_observation.seeders,
        "last_leechers": summary.last_observation.leechers,
        "seeder_decay_ratio": summary.seeder_decay_ratio,
        "leecher_decay_ratio": summary.leecher_decay_ratio,
        "hours_to_peak": summary.hours_to_peak,
        "hours_to_leecher_peak": summary.hours_to_leecher_peak,
    }
