"""Run metrics, mode comparison, theta_max sweeps and CSV output.

Floats are written with ``repr`` so a CSV read back gives the exact values,
and a summary recomputed from an emitted trace matches the original.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Sequence

from .geometry import Pose, Vec2
from .planner import Command
from .simulator import SimulationResult, TraceSample, run

if TYPE_CHECKING:
    from .band import Band
    from .scenario import Scenario

TRACE_COLUMNS = (
    "time_s",
    "x_m",
    "y_m",
    "theta_rad",
    "theta_required_rad",
    "delta_theta_rad",
    "vbx_mps",
    "vby_mps",
    "omega_radps",
    "clearance_m",
)

SUMMARY_COLUMNS = (
    "label",
    "mode",
    "theta_max_rad",
    "theta_max_deg",
    "completed",
    "total_time_s",
    "mean_delta_theta_rad",
    "mean_delta_theta_deg",
    "max_delta_theta_rad",
    "max_delta_theta_deg",
    "pct_within_theta_max",
    "min_clearance_m",
    "path_length_m",
    "error",
)

BAND_COLUMNS = ("k", "t_s", "x_m", "y_m", "theta_rad", "dt_s")


@dataclass(frozen=True)
class RunSummary:
    """Aggregates over one trace; angles in radians, lengths in meters."""

    total_time: float
    mean_delta_theta: float
    max_delta_theta: float
    pct_within_theta_max: float
    min_clearance: float
    path_length: float
    completed: bool


def summarize(trace: Sequence[TraceSample], theta_max: float, completed: bool = True) -> RunSummary:
    if not trace:
        raise ValueError("cannot summarize an empty trace")
    dth = [s.delta_theta for s in trace]
    length = math.fsum(
        math.hypot(b.pose.x - a.pose.x, b.pose.y - a.pose.y) for a, b in zip(trace, trace[1:])
    )
    return RunSummary(
        total_time=trace[-1].time - trace[0].time,
        mean_delta_theta=math.fsum(dth) / len(dth),
        max_delta_theta=max(dth),
        pct_within_theta_max=sum(1 for d in dth if d <= theta_max) / len(dth),
        min_clearance=min(s.clearance for s in trace),
        path_length=length,
        completed=completed,
    )


def summarize_result(result: SimulationResult) -> RunSummary:
    return summarize(result.trace, result.theta_max, result.completed)


def compare(a: RunSummary, b: RunSummary) -> list[tuple[str, float, float, float]]:
    """Rows of ``(field, a, b, b - a)`` for every summary field."""
    rows = []
    for f in fields(RunSummary):
        va, vb = getattr(a, f.name), getattr(b, f.name)
        if isinstance(va, bool):
            va, vb = int(va), int(vb)
        rows.append((f.name, va, vb, vb - va))
    return rows


def format_comparison(rows, labels=("a", "b")) -> str:
    out = io.StringIO()
    out.write(f"{'field':<22}{labels[0]:>14}{labels[1]:>14}{'delta':>14}\n")
    for name, va, vb, d in rows:
        if name.endswith("delta_theta"):
            # angles are easier to read in degrees
            va, vb, d = math.degrees(va), math.degrees(vb), math.degrees(d)
            name += " (deg)"
        out.write(f"{name:<22}{va:>14.4f}{vb:>14.4f}{d:>+14.4f}\n")
    return out.getvalue()


@dataclass(frozen=True)
class SweepRow:
    theta_max: float
    summary: RunSummary | None
    error: str | None = None


def _sweep_point(args) -> SweepRow:
    scenario, theta = args
    try:
        res = run(scenario.with_planner(theta_max=theta))
    except Exception as exc:  # a failed point is reported, not fatal
        return SweepRow(theta, None, f"{type(exc).__name__}: {exc}")
    return SweepRow(theta, summarize_result(res))


def sweep(scenario: "Scenario", theta_values: Sequence[float], workers: int = 1) -> list[SweepRow]:
    """One closed-loop run per ``theta_max`` (radians, ascending), everything else fixed."""
    values = [float(v) for v in theta_values]
    if not values:
        raise ValueError("no theta_max values given")
    if any(b < a for a, b in zip(values, values[1:])):
        raise ValueError("theta_max values must be sorted ascending")
    jobs = [(scenario, v) for v in values]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_point, jobs))
    return [_sweep_point(j) for j in jobs]


# -- CSV ----------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return ""
    return str(v)


def _write_rows(dest, columns, rows) -> str | None:
    """Write to a path or open text file; with ``dest=None`` return the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if dest is None:
        return text
    if isinstance(dest, (str, Path)):
        Path(dest).write_text(text)
    else:
        dest.write(text)
    return None


def trace_rows(trace: Iterable[TraceSample]):
    for s in trace:
        yield (
            float(s.time), s.pose.x, s.pose.y, s.pose.theta, float(s.theta_required), float(s.delta_theta),
            float(s.command.v_body.x), float(s.command.v_body.y), float(s.command.omega), float(s.clearance),
        )


def write_trace_csv(trace: Iterable[TraceSample], dest=None):
    return _write_rows(dest, TRACE_COLUMNS, trace_rows(trace))


def read_trace_csv(source) -> list[TraceSample]:
    """Inverse of :func:`write_trace_csv`; footprint clearance is not stored and comes back as NaN."""
    text = Path(source).read_text() if isinstance(source, (str, Path)) else source.read()
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != TRACE_COLUMNS:
        raise ValueError(f"unexpected trace header {header}")
    out = []
    for row in reader:
        t, x, y, th, req, dth, vx, vy, w, c = map(float, row)
        out.append(TraceSample(t, Pose(x, y, th), Command(Vec2(vx, vy), w), req, dth, c))
    return out


def summary_row(summary: RunSummary | None, *, label: str = "", mode: str = "", theta_max: float = math.nan,
                error: str | None = None) -> tuple:
    if summary is None:
        nan = math.nan
        vals = (False, nan, nan, nan, nan, nan, nan, nan, nan)
    else:
        s = summary
        vals = (
            s.completed, s.total_time,
            s.mean_delta_theta, math.degrees(s.mean_delta_theta),
            s.max_delta_theta, math.degrees(s.max_delta_theta),
            s.pct_within_theta_max, s.min_clearance, s.path_length,
        )
    return (label, mode, float(theta_max), math.degrees(theta_max), *vals, error)


def write_summary_csv(rows: Iterable[tuple], dest=None):
    """``rows`` come from :func:`summary_row`."""
    return _write_rows(dest, SUMMARY_COLUMNS, rows)


def write_band_csv(band: "Band", dest=None):
    t = 0.0
    rows = []
    for k in range(band.n):
        x, y, th = (float(v) for v in band.poses[k])
        dt = float(band.dts[k]) if k < band.n - 1 else None
        rows.append((k, t, x, y, th, dt))
        if dt is not None:
            t += dt
    return _write_rows(dest, BAND_COLUMNS, rows)


__all__ = [
    "RunSummary",
    "SweepRow",
    "compare",
    "format_comparison",
    "read_trace_csv",
    "summarize",
    "summarize_result",
    "summary_row",
    "sweep",
    "write_band_csv",
    "write_summary_csv",
    "write_trace_csv",
]
