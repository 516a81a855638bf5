import json

import pandas as pd
import pytest
from click.testing import CliRunner

from swarm_lab import main

REF_FLAGS = ["--s", "1", "--mu", "1", "--r", "0.2", "--lambda", "1"]


def run(*args):
    return CliRunner().invoke(main, [str(a) for a in args])


def envelope(result):
    assert result.exit_code == 0, result.output
    return json.loads(result.stdout)


def test_analytic_envelope():
    data = envelope(run("analytic", *REF_FLAGS))
    assert data["command"] == "analytic"
    assert data["parameters"] == {"s": 1.0, "mu": 1.0, "r": 0.2, "lambda": 1.0}
    assert data["results"]["busy_period"] == pytest.approx(1.933431, abs=1e-6)
    assert data["results"]["bundling_factor"] == pytest.approx(4.320117, abs=1e-5)
    assert data["results"]["availability_fraction"] == pytest.approx(0.278856, abs=1e-5)
    assert data["warnings"] == []


def test_lambda_defaults_to_zero():
    data = envelope(run("analytic", "--s", "1", "--mu", "1", "--r", "0.2"))
    assert data["parameters"]["lambda"] == 0.0


@pytest.mark.parametrize("args, code", [
    (["analytic", "--s", "0", "--mu", "1", "--r", "0.2"], 2),
    (["analytic", "--s", "1", "--mu", "1"], 2),
    (["analytic", "--s", "1", "--mu", "1", "--r", "0.2", "--lambda", "700"], 3),
    (["simulate", *REF_FLAGS], 2),
    (["simulate", *REF_FLAGS, "--seed", "-1"], 2),
    (["simulate", *REF_FLAGS, "--seed", "1", "--replications", "0"], 2),
    (["simulate", *REF_FLAGS, "--seed", "1", "--service", "gamma"], 2),
    (["schedule", "--n", "0"], 2),
    (["schedule", "--n", "3", "--free-riders", "4"], 2),
    (["nonsense"], 2),
])
def test_exit_codes(args, code):
    assert run(*args).exit_code == code


def test_simulate_checks_formula():
    args = ("simulate", *REF_FLAGS, "--seed", "42", "--replications", "20000")
    first = envelope(run(*args))
    res = first["results"]
    assert res["n"] == 20000
    assert res["analytic_busy_period"] == pytest.approx(1.933431, abs=1e-6)
    assert abs(res["z_score"]) < 4
    assert first["parameters"]["seed"] == 42


@pytest.mark.parametrize("args", [
    ("simulate", *REF_FLAGS, "--seed", "42", "--replications", "2000"),
    ("bundle", *REF_FLAGS, "--seed", "7", "--replications", "1000"),
    ("profile", "--s", "1", "--mu", "1", "--r", "0.2", "--segment", "36:0.5:5", "--segment", "36:0.05:0.5",
     "--horizon", "72", "--seed", "4"),
    ("availability", "--s", "1", "--mu", "1", "--r", "0.2", "--target", "0.4", "--seed", "3",
     "--replications", "1000"),
])
def test_seeded_commands_repeat_byte_for_byte(args):
    first, second = run(*args), run(*args)
    assert first.exit_code == 0, first.output
    assert first.stdout_bytes == second.stdout_bytes


def test_simulate_writes_event_trace(tmp_path):
    out = tmp_path / "events.csv"
    envelope(run("simulate", *REF_FLAGS, "--seed", "3", "--replications", "20", "--trace-out", out))
    frame = pd.read_csv(out)
    assert frame["period"].nunique() == 20
    assert list(frame.columns) == ["period", "seq", "time", "kind", "holders_after"]


def test_simulate_fails_when_periods_keep_truncating():
    # x = 3 with a two-event cap: most periods truncate
    result = run("simulate", "--s", "1", "--mu", "1", "--r", "0.2", "--lambda", "2.8",
                 "--seed", "1", "--replications", "50", "--max-events", "2")
    assert result.exit_code == 5


def test_bundle_reports_analytic_ratio():
    data = envelope(run("bundle", *REF_FLAGS, "--seed", "7", "--replications", "2000"))
    assert data["results"]["analytic_ratio"] == pytest.approx(2.160058, abs=1e-5)
    assert data["results"]["ratio"] > 1.0


@pytest.mark.slow
def test_bundle_ratio_at_desk_scale():
    data = envelope(run("bundle", *REF_FLAGS, "--seed", "7", "--replications", "100000"))
    assert data["results"]["ratio"] == pytest.approx(2.160058, rel=0.05)


def test_schedule_three_leechers(tmp_path):
    sched_out, report_out = tmp_path / "s.csv", tmp_path / "r.json"
    data = envelope(run("schedule", "--n", "3", "--schedule-out", sched_out, "--report-out", report_out))
    res = data["results"]
    assert res["max_leecher_upload"] == pytest.approx(2 / 3, abs=1e-9)
    assert res["max_leecher_upload_exact"] == "2/3"
    assert res["seeder_upload"] == 1.0
    assert res["all_complete"] is True
    assert len(pd.read_csv(sched_out)) == 3 + 6
    assert json.loads(report_out.read_text())["budget_ok"] is True


def test_trace_compare_snapshots(table1_path):
    data = envelope(run("trace", "--in", table1_path, "--compare", "0:1"))
    assert data["results"]["layout"] == "snapshot"
    assert data["results"]["comparison"]["leecher_ratio"] == pytest.approx(0.0124256, abs=1e-5)


def test_trace_summary_and_plot(table2_path, tmp_path):
    plot, summary = tmp_path / "plot.csv", tmp_path / "summary.json"
    data = envelope(run("trace", "--in", table2_path, "--formation", "2010-04-26T00:00:00",
                        "--plot-out", plot, "--summary-out", summary))
    res = data["results"]["summary"]
    assert res["peak_seeders"] == 11187
    assert res["peak_seeders_time"] == "2010-04-27T19:15:01"
    assert res["hours_to_peak"] == pytest.approx(43.25028, abs=1e-4)
    assert data["warnings"] == []
    frame = pd.read_csv(plot)
    assert list(frame.columns) == ["hours", "seeders", "leechers", "seeder_share"]
    assert len(frame) == 8
    assert json.loads(summary.read_text())["peak_leechers"] == 5132


def test_trace_without_formation_warns(table2_path):
    data = envelope(run("trace", "--in", table2_path))
    assert data["results"]["summary"]["hours_to_peak"] == pytest.approx(3.70861, abs=1e-4)
    assert len(data["warnings"]) == 1


def test_trace_errors(tmp_path, table1_path):
    assert run("trace", "--in", tmp_path / "missing.csv").exit_code == 4
    bad = tmp_path / "bad.csv"
    bad.write_text("timestamp,seeders,leechers\n2010-04-27T10:00:00,-1,2\n")
    result = run("trace", "--in", bad)
    assert result.exit_code == 4
    assert "line 2" in result.output
    assert run("trace", "--in", table1_path, "--compare", "0:5").exit_code == 2
    assert run("trace", "--in", table1_path, "--compare", "zero").exit_code == 2


def test_trace_with_undecodable_bytes_exits_cleanly(tmp_path):
    bad = tmp_path / "binary.csv"
    bad.write_bytes(b"timestamp,seeders,leechers\n\xff\xfe,1,1\n")
    result = run("trace", "--in", bad)
    assert result.exit_code == 4
    assert "line 2" in result.output
    assert "Traceback" not in result.output


def test_profile_command(tmp_path):
    out = tmp_path / "profile.csv"
    data = envelope(run("profile", "--s", "1", "--mu", "1", "--r", "0.2",
                        "--segment", "36:0.5:5", "--segment", "36:0.05:0.5",
                        "--horizon", "72", "--step", "1", "--seed", "4", "--out", out))
    assert data["results"]["peak_holders"] > 0
    assert data["parameters"]["segments"] == ["36:0.5:5", "36:0.05:0.5"]
    assert len(pd.read_csv(out)) == 73
    assert run("profile", "--s", "1", "--mu", "1", "--r", "0.2", "--segment", "36:0.5",
               "--horizon", "72", "--seed", "4").exit_code == 2


def test_availability_command():
    data = envelope(run("availability", "--s", "1", "--mu", "1", "--r", "0.2", "--target", "0.5"))
    assert data["results"]["availability_fraction"] == pytest.approx(0.5, abs=1e-9)
    assert data["results"]["busy_period"] == pytest.approx(5.0, rel=1e-6)
    assert "simulated_busy_share" not in data["results"]
    assert run("availability", "--s", "1", "--mu", "1", "--r", "0.2", "--target", "1.5").exit_code == 2
