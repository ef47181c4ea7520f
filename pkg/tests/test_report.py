import csv
import io
import math

import pytest

from omniplan import report
from omniplan.geometry import Pose, Vec2
from omniplan.planner import Command, PlannerConfig, TaskGoal, plan_global, plan_local, problem_context
from omniplan.scenario import Scenario
from omniplan.simulator import SimConfig, TraceSample, run


def sample(t, dth, x=0.0):
    return TraceSample(t, Pose(x, 0.0, 0.0), Command.zero(), 0.0, dth, 1.0)


def small_scenario(**sim):
    return Scenario(
        bounds=((0.0, 0.0), (5.0, 4.0)),
        start=Pose(1.2, 1.2, 0.7),
        goals=(TaskGoal(Vec2(3.5, 2.8), Vec2(4.5, 1.0)),),
        planner=PlannerConfig(),
        sim=SimConfig(**sim),
        name="small",
    )


@pytest.fixture(scope="module")
def small_run():
    return run(small_scenario())


def test_summarize_single_sample():
    s = report.summarize([sample(0.0, 0.0)], 0.26)
    assert (s.mean_delta_theta, s.max_delta_theta, s.pct_within_theta_max) == (0.0, 0.0, 1.0)
    assert s.total_time == 0.0 and s.path_length == 0.0


def test_summarize_two_samples():
    s = report.summarize([sample(0.0, 0.1), sample(0.1, 0.3, x=0.2)], 0.26)
    assert s.mean_delta_theta == pytest.approx(0.2)
    assert s.max_delta_theta == 0.3
    assert s.pct_within_theta_max == 0.5
    assert s.total_time == pytest.approx(0.1)
    assert s.path_length == pytest.approx(0.2)


def test_summarize_empty():
    with pytest.raises(ValueError):
        report.summarize([], 0.2)


def test_compare_identical_is_zero(small_run):
    s = report.summarize_result(small_run)
    rows = report.compare(s, s)
    assert len(rows) == 7
    assert all(d == 0 for _, _, _, d in rows)
    text = report.format_comparison(rows, ("a", "b"))
    assert "mean_delta_theta (deg)" in text


def test_summary_invariants(small_run):
    s = report.summarize_result(small_run)
    assert 0 <= s.pct_within_theta_max <= 1
    assert s.max_delta_theta >= s.mean_delta_theta >= 0


def test_trace_csv_columns_and_resummary(small_run, tmp_path):
    path = tmp_path / "trace.csv"
    report.write_trace_csv(small_run.trace, path)
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert tuple(rows[0]) == report.TRACE_COLUMNS
    assert len(rows) == len(small_run.trace) + 1
    back = report.read_trace_csv(path)
    th = small_run.theta_max
    assert report.summarize(back, th) == report.summarize(small_run.trace, th)


def test_resummary_by_hand_from_csv(small_run):
    """Aggregate the CSV columns directly, without the package's reader."""
    text = report.write_trace_csv(small_run.trace)
    rows = list(csv.DictReader(io.StringIO(text)))
    dth = [float(r["delta_theta_rad"]) for r in rows]
    s = report.summarize_result(small_run)
    assert math.fsum(dth) / len(dth) == s.mean_delta_theta
    assert max(dth) == s.max_delta_theta
    assert float(rows[-1]["time_s"]) - float(rows[0]["time_s"]) == s.total_time


def test_summary_csv_has_degrees(small_run):
    s = report.summarize_result(small_run)
    text = report.write_summary_csv([report.summary_row(s, label="x", mode="oateb", theta_max=0.2)])
    (row,) = list(csv.DictReader(io.StringIO(text)))
    assert list(row) == list(report.SUMMARY_COLUMNS)
    assert float(row["max_delta_theta_deg"]) == pytest.approx(math.degrees(s.max_delta_theta))
    assert float(row["theta_max_deg"]) == pytest.approx(math.degrees(0.2))


def test_band_csv_times_accumulate():
    sc = small_scenario()
    goal = sc.goals[0]
    band, _ = plan_local(plan_global(sc.grid(), sc.start, goal), sc.planner,
                         problem_context(sc.planner, sc.world_obstacles(), sc.robot.r_roi, goal.orientation_target))
    rows = list(csv.DictReader(io.StringIO(report.write_band_csv(band))))
    assert len(rows) == band.n
    assert float(rows[-1]["t_s"]) == pytest.approx(band.total_time)
    assert rows[-1]["dt_s"] == ""


def test_single_value_sweep_is_plain_run(small_run):
    th = small_run.theta_max
    (row,) = report.sweep(small_scenario(), [th])
    assert row.error is None
    assert row.summary == report.summarize_result(small_run)


def test_sweep_requires_sorted():
    with pytest.raises(ValueError):
        report.sweep(small_scenario(), [0.3, 0.1])


def test_sweep_records_failures():
    rows = report.sweep(small_scenario(time_cap=0.3), [0.1, 0.2])
    assert len(rows) == 2
    assert all(r.summary is None and "TimeCapExceeded" in r.error for r in rows)
    text = report.write_summary_csv([report.summary_row(r.summary, theta_max=r.theta_max, error=r.error) for r in rows])
    assert text.count("TimeCapExceeded") == 2


def test_parallel_sweep_matches_serial():
    sc = small_scenario()
    vals = [math.radians(10), math.radians(20)]
    assert report.sweep(sc, vals, workers=2) == report.sweep(sc, vals)
