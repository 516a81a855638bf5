import functools
import json
import logging
import math
import re
import sys
from datetime import datetime
from fractions import Fraction

import click
import numpy as np

from busy_period import (
    SwarmParams,
    analytic_report,
    bundling_factor,
    expected_busy_period,
    solve_peer_rate,
)
from exchange_schedule import build_schedule, report_to_dict, verify_schedule, write_schedule_csv
from swarm_errors import (
    BusyPeriodOverflowError,
    InvalidParameterError,
    SwarmLabError,
    TraceError,
)
from swarm_sim import (
    DEFAULT_MAX_EVENTS,
    DEFAULT_REPLICATIONS,
    EXPONENTIAL,
    SERVICE_DISTRIBUTIONS,
    ArrivalProfile,
    SimConfig,
    compare_bundle,
    run_busy_periods,
    run_profile_sim,
    write_event_trace,
)
from swarm_stats import bootstrap_mean_ci, z_score, sample_summary
from tracker_trace import (
    TIMESTAMP_FORMAT,
    activity_frame,
    compare_swarms,
    parse_snapshots,
    parse_trace,
    sniff_layout,
    summarize,
    summary_to_dict,
)

"""
Command-line entry point of the swarm availability lab.

Every successful command prints exactly one JSON envelope on stdout:
  {"command": ..., "parameters": ..., "results": ..., "warnings": [...]}
Diagnostics go to stderr. Exit codes:
  2 bad flags or parameters, 3 load overflow, 4 file I/O or unreadable input,
  5 other model errors (causality violations, simulation failures).

Run:
python scripts/swarm_lab.py analytic --s 1 --mu 1 --r 0.2 --lambda 1
"""

log = logging.getLogger("swarm_lab")

EXIT_USAGE = 2
EXIT_OVERFLOW = 3
EXIT_IO = 4
EXIT_MODEL = 5

JSON_SIGNIFICANT_DIGITS = 9
SEED_RANGE = click.IntRange(0, 2 ** 64 - 1)
# simulated-vs-analytic tolerance quoted in warnings
Z_WARN = 3.0


# ---------------------------
# Envelope helpers
# ---------------------------
def _clean(value):
    """Round floats to 9 significant digits and make everything JSON-native."""
    if isinstance(value, bool) or value is None or isinstance(value, (int, str)):
        return value
    if isinstance(value, Fraction):
        value = float(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if not math.isfinite(value):
            return None
        return float(f"{value:.{JSON_SIGNIFICANT_DIGITS}g}")
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, datetime):
        return value.strftime(TIMESTAMP_FORMAT)
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return str(value)


def emit(command: str, parameters: dict, results: dict, warnings: list) -> None:
    envelope = {
        "command": command,
        "parameters": _clean(parameters),
        "results": _clean(results),
        "warnings": list(warnings),
    }
    click.echo(json.dumps(envelope, indent=2, allow_nan=False))


def guarded(fn):
    """Map lab errors onto exit codes with a one-line message on stderr."""

    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return fn(*args, **kwargs)
        except BusyPeriodOverflowError as e:
            click.echo(f"[ERROR] {e}", err=True)
            ctx.exit(EXIT_OVERFLOW)
        except InvalidParameterError as e:
            click.echo(f"[ERROR] {e}", err=True)
            ctx.exit(EXIT_USAGE)
        except (OSError, TraceError) as e:
            click.echo(f"[ERROR] {e}", err=True)
            ctx.exit(EXIT_IO)
        except SwarmLabError as e:
            click.echo(f"[ERROR] {e}", err=True)
            ctx.exit(EXIT_MODEL)

    return wrapper


def model_options(fn):
    fn = click.option("--lambda", "lam", type=float, default=0.0, show_default=True,
                      help="Peer arrival rate")(fn)
    fn = click.option("--r", type=float, required=True, help="Publisher arrival rate")(fn)
    fn = click.option("--mu", type=float, required=True, help="Mean per-peer download rate")(fn)
    fn = click.option("--s", type=float, required=True, help="File size in data units")(fn)
    return fn


def sim_options(fn):
    fn = click.option("--progress", is_flag=True, help="Show a progress bar on stderr")(fn)
    fn = click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)(fn)
    fn = click.option("--max-events", type=click.IntRange(min=2), default=DEFAULT_MAX_EVENTS,
                      show_default=True, help="Safety cap on events per busy period")(fn)
    fn = click.option("--service", type=click.Choice(SERVICE_DISTRIBUTIONS), default=EXPONENTIAL,
                      show_default=True, help="Residence-time distribution")(fn)
    fn = click.option("--replications", type=click.IntRange(min=1), default=DEFAULT_REPLICATIONS,
                      show_default=True)(fn)
    fn = click.option("--seed", type=SEED_RANGE, required=True, help="Master RNG seed")(fn)
    return fn


def _params(s, mu, r, lam) -> SwarmParams:
    return SwarmParams(s=s, mu=mu, r=r, lam=lam)


def _config(seed, replications, service, max_events, workers, progress, record_events=False) -> SimConfig:
    return SimConfig(
        seed=seed,
        replications=replications,
        service_distribution=service,
        record_events=record_events,
        max_events_per_period=max_events,
        workers=workers,
        progress=progress,
    )


def _model_echo(s, mu, r, lam) -> dict:
    return {"s": s, "mu": mu, "r": r, "lambda": lam}


def _sim_echo(seed, replications, service, max_events) -> dict:
    return {"seed": seed, "replications": replications, "service": service, "max_events": max_events}


# ---------------------------
# Commands
# ---------------------------
@click.group()
@click.option("--verbose", is_flag=True, help="Log [INFO] diagnostics to stderr")
def main(verbose: bool):
    """Content-availability lab for P2P swarms."""
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="[%(levelname)s] %(message)s",
        stream=sys.stderr,
        force=True,
    )


@main.command()
@model_options
@guarded
def analytic(s, mu, r, lam):
    """Closed-form busy period, bundling factor and availability."""
    rep = analytic_report(_params(s, mu, r, lam))
    emit("analytic", _model_echo(s, mu, r, lam), {
        "busy_period": rep.busy_period,
        "bundling_factor": rep.bundling_factor,
        "availability_fraction": rep.availability_fraction,
        "load": rep.load,
        "mean_idle": rep.mean_idle,
    }, [])


@main.command()
@model_options
@sim_options
@click.option("--trace-out", type=click.Path(dir_okay=False), default=None,
              help="Write per-event CSV of every busy period")
@guarded
def simulate(s, mu, r, lam, seed, replications, service, max_events, workers, progress, trace_out):
    """Simulated busy periods checked against the closed form."""
    params = _params(s, mu, r, lam)
    config = _config(seed, replications, service, max_events, workers, progress,
                     record_events=trace_out is not None)
    log.info(f"[simulate] x={params.load:.6g}, {replications:,} replications, seed {seed}")
    stats = run_busy_periods(params, config)
    warnings = []
    results = {
        "n": stats.n,
        "mean": stats.mean,
        "variance": stats.variance,
        "ci_half_width_95": stats.ci_half_width_95,
        "truncated_count": stats.truncated_count,
        "mean_idle": stats.mean_idle,
        "busy_share": stats.busy_share,
        "rejected_peers": stats.rejected_peers,
    }
    try:
        target = expected_busy_period(params)
    except BusyPeriodOverflowError as e:
        warnings.append(f"no analytic comparison: {e}")
        target = None
    if target is not None:
        z = z_score(stats.as_summary(), target)
        results.update({
            "analytic_busy_period": target,
            "z_score": z,
            "analytic_in_ci": stats.contains(target),
        })
        if abs(z) > Z_WARN:
            warnings.append(f"simulated mean is {z:.2f} standard errors from the analytic value")
    if stats.truncated_count:
        warnings.append(f"{stats.truncated_count} periods hit --max-events and were excluded")
    if trace_out is not None:
        write_event_trace(stats.traces, trace_out)
    echo = {**_model_echo(s, mu, r, lam), **_sim_echo(seed, replications, service, max_events)}
    emit("simulate", echo, results, warnings)


@main.command()
@model_options
@sim_options
@guarded
def bundle(s, mu, r, lam, seed, replications, service, max_events, workers, progress):
    """Simulated B(2s) against two independent size-s swarms."""
    params = _params(s, mu, r, lam)
    config = _config(seed, replications, service, max_events, workers, progress)
    cmp = compare_bundle(params, config)
    warnings = []
    results = {
        "b_single_2s": cmp.b_single_2s,
        "b_two_of_s_sum": cmp.b_two_of_s_sum,
        "ratio": cmp.ratio,
        "ratio_ci_half_width_95": cmp.ratio_ci_half_width_95,
        "truncated_count": cmp.double.truncated_count + cmp.first.truncated_count
        + cmp.second.truncated_count,
    }
    try:
        results["analytic_ratio"] = bundling_factor(params) / 2.0
    except BusyPeriodOverflowError as e:
        warnings.append(f"no analytic ratio: {e}")
    echo = {**_model_echo(s, mu, r, lam), **_sim_echo(seed, replications, service, max_events)}
    emit("bundle", echo, results, warnings)


@main.command()
@click.option("--n", type=int, required=True, help="Cooperating leechers (= chunks)")
@click.option("--free-riders", type=int, default=0, show_default=True)
@click.option("--schedule-out", type=click.Path(dir_okay=False), default=None,
              help="CSV round,sender,receiver,chunk")
@click.option("--report-out", type=click.Path(dir_okay=False), default=None, help="JSON report")
@guarded
def schedule(n, free_riders, schedule_out, report_out):
    """Build and replay the chunk-exchange schedule."""
    plan = build_schedule(n, free_riders)
    report = report_to_dict(verify_schedule(plan))
    if schedule_out is not None:
        write_schedule_csv(plan, schedule_out)
    if report_out is not None:
        with open(report_out, "w", encoding="utf-8") as f:
            json.dump(_clean(report), f, indent=2)
    warnings = [] if report["budget_ok"] else ["upload totals differ from the protocol budget"]
    emit("schedule", {"n": n, "free_riders": free_riders}, report, warnings)


def _parse_compare(value):
    if value is None:
        return None
    found = re.fullmatch(r"(\d+):(\d+)", value.strip())
    if not found:
        raise click.BadParameter("expected I:J with zero-based row indices", param_hint="--compare")
    return int(found.group(1)), int(found.group(2))


def _parse_formation(value):
    if value is None:
        return None
    try:
        return datetime.strptime(value, TIMESTAMP_FORMAT)
    except ValueError:
        raise click.BadParameter(f"expected {TIMESTAMP_FORMAT}", param_hint="--formation")


def _pick(rows, pair):
    i, j = pair
    for k in (i, j):
        if not 0 <= k < len(rows):
            raise InvalidParameterError(f"row {k} is out of range 0..{len(rows) - 1}")
    return rows[i], rows[j]


@main.command()
@click.option("--in", "in_path", type=click.Path(dir_okay=False), required=True,
              help="Trace CSV (timestamp,seeders,leechers) or snapshot CSV (title,date,...)")
@click.option("--formation", default=None, help="Swarm formation time, YYYY-MM-DDTHH:MM:SS")
@click.option("--compare", "compare_pair", default=None, help="Row pair I:J, ratios of I over J")
@click.option("--plot-out", type=click.Path(dir_okay=False), default=None,
              help="CSV of hours since formation vs seeders and leechers")
@click.option("--summary-out", type=click.Path(dir_okay=False), default=None, help="Summary JSON")
@guarded
def trace(in_path, formation, compare_pair, plot_out, summary_out):
    """Summarise a tracker trace or compare two observed swarms."""
    pair = _parse_compare(compare_pair)
    formation_time = _parse_formation(formation)
    warnings = []
    results = {}
    echo = {"in": in_path, "formation": formation, "compare": compare_pair}

    layout = sniff_layout(in_path)
    log.info(f"[trace] reading {in_path} as a {layout} file")
    if layout == "snapshot":
        rows = parse_snapshots(in_path)
        results["layout"] = "snapshot"
        results["rows"] = [
            {"title": row.title, "date": row.date.isoformat(), "seeders": row.seeders,
             "leechers": row.leechers}
            for row in rows
        ]
        if plot_out is not None or summary_out is not None:
            warnings.append("snapshot files carry no time series; --plot-out/--summary-out ignored")
    else:
        rows = parse_trace(in_path)
        results["layout"] = "trace"
        if rows:
            if formation_time is None:
                formation_time = rows[0].timestamp
                warnings.append("no --formation given; hours are measured from the first observation")
            summary = summary_to_dict(summarize(rows, formation_time))
            results["summary"] = summary
            if summary_out is not None:
                with open(summary_out, "w", encoding="utf-8") as f:
                    json.dump(_clean(summary), f, indent=2)
            if plot_out is not None:
                activity_frame(rows, formation_time).to_csv(plot_out, index=False, float_format="%.9g")
        else:
            warnings.append("trace has no records")

    if pair is not None:
        a, b = _pick(rows, pair)
        cmp = compare_swarms(a, b)
        results["comparison"] = {"leecher_ratio": cmp.leecher_ratio, "seeder_ratio": cmp.seeder_ratio}
    emit("trace", echo, results, warnings)


def _parse_segment(value: str):
    parts = value.split(":")
    if len(parts) != 3:
        raise click.BadParameter(f"{value!r} is not DURATION:PUBLISHER_RATE:PEER_RATE",
                                 param_hint="--segment")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise click.BadParameter(f"{value!r} has a non-numeric field", param_hint="--segment")


@main.command()
@model_options
@click.option("--segment", "segments", multiple=True,
              help="DURATION:PUBLISHER_RATE:PEER_RATE, repeatable; omit for constant r and lambda")
@click.option("--horizon", type=float, required=True)
@click.option("--step", type=float, default=None, help="Sampling resolution (default horizon/500)")
@click.option("--seed", type=SEED_RANGE, required=True)
@click.option("--service", type=click.Choice(SERVICE_DISTRIBUTIONS), default=EXPONENTIAL,
              show_default=True)
@click.option("--out", type=click.Path(dir_okay=False), default=None,
              help="CSV time,holders,cumulative_rejected")
@guarded
def profile(s, mu, r, lam, segments, horizon, step, seed, service, out):
    """One swarm under piecewise-constant arrival rates."""
    params = _params(s, mu, r, lam)
    if segments:
        arrivals = ArrivalProfile.piecewise(_parse_segment(v) for v in segments)
    else:
        arrivals = ArrivalProfile.constant(r, lam)
    run = run_profile_sim(params, arrivals, horizon, SimConfig(seed=seed, service_distribution=service),
                          step=step)
    warnings = []
    results = {
        "peak_holders": run.peak_holders,
        "peak_time": run.peak_time,
        "total_rejected": run.total_rejected,
        "completed_busy_periods": len(run.busy_periods),
    }
    if run.busy_periods:
        lo, hi = bootstrap_mean_ci(run.busy_periods, seed=seed)
        results["busy_period_mean"] = sample_summary(run.busy_periods).mean
        results["busy_period_ci_95"] = [lo, hi]
    else:
        warnings.append("no busy period completed inside the horizon")
    if out is not None:
        run.series.to_csv(out, index=False, float_format="%.9g")
    echo = {**_model_echo(s, mu, r, lam), "segments": list(segments), "horizon": horizon,
            "step": step, "seed": seed, "service": service}
    emit("profile", echo, results, warnings)


@main.command()
@click.option("--s", type=float, required=True)
@click.option("--mu", type=float, required=True)
@click.option("--r", type=float, required=True)
@click.option("--target", type=float, required=True, help="Desired availability fraction")
@click.option("--seed", type=SEED_RANGE, default=None, help="Confirm by simulation when given")
@click.option("--replications", type=click.IntRange(min=1), default=DEFAULT_REPLICATIONS,
              show_default=True)
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@guarded
def availability(s, mu, r, target, seed, replications, workers):
    """Peer rate that yields a target availability, optionally simulator-confirmed."""
    lam = solve_peer_rate(s, mu, r, target)
    params = _params(s, mu, r, lam)
    rep = analytic_report(params)
    results = {
        "lambda": lam,
        "busy_period": rep.busy_period,
        "availability_fraction": rep.availability_fraction,
        "load": rep.load,
    }
    if seed is not None:
        stats = run_busy_periods(params, SimConfig(seed=seed, replications=replications, workers=workers))
        results["simulated_busy_share"] = stats.busy_share
        results["relative_error"] = stats.busy_share / rep.availability_fraction - 1.0
    echo = {"s": s, "mu": mu, "r": r, "target": target, "seed": seed, "replications": replications}
    emit("availability", echo, results, [])


if __name__ == "__main__":
    main()
