"""Timed elastic band: poses interleaved with time intervals.

Index convention is 0-based throughout: a band with ``n`` poses has
intervals ``0 .. n-2``; ``dts[k]`` separates ``poses[k]`` and ``poses[k+1]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Pose, Vec2, angle_diff, normalize_angle, required_orientations
from .gridmap import RectObstacle, clearance_and_gradient, obstacle_array

DT_MIN = 1e-3


@dataclass(frozen=True)
class KinematicLimits:
    """Per-body-axis speed/acceleration bounds plus angular bounds."""

    v_max_body: Vec2 = Vec2(2.0, 2.0)
    a_max_body: Vec2 = Vec2(3.0, 3.0)
    omega_max: float = math.pi
    alpha_max: float = 2.0 * math.pi

    def __post_init__(self):
        object.__setattr__(self, "v_max_body", Vec2(*map(float, self.v_max_body)))
        object.__setattr__(self, "a_max_body", Vec2(*map(float, self.a_max_body)))
        vals = [*self.v_max_body, *self.a_max_body, self.omega_max, self.alpha_max]
        if not all(math.isfinite(v) and v > 0 for v in vals):
            raise ValueError(f"kinematic limits must be finite and positive: {vals}")


@dataclass(frozen=True)
class PenaltyWeights:
    """Soft-constraint weights; defaults are the published OATEB values."""

    sigma_v: float = 1.0
    sigma_a: float = 3.0
    sigma_omega: float = 1.0
    sigma_alpha: float = 3.0
    sigma_o: float = 50.0
    sigma_theta: float = 1.0

    def __post_init__(self):
        for name in ("sigma_v", "sigma_a", "sigma_omega", "sigma_alpha", "sigma_o", "sigma_theta"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be a nonnegative finite number, got {v}")

    def scaled(self, factor: float) -> "PenaltyWeights":
        return PenaltyWeights(*(factor * getattr(self, f) for f in self.__dataclass_fields__))


@dataclass(frozen=True)
class OrientationTask:
    """Keep every pose's heading within ``theta_max`` of the bearing to ``target``."""

    target: Vec2
    theta_max: float

    def __post_init__(self):
        object.__setattr__(self, "target", Vec2(*map(float, self.target)))
        if not 0.0 < self.theta_max <= math.pi:
            raise ValueError("theta_max must lie in (0, pi]")


@dataclass(frozen=True, eq=False)
class Band:
    """Poses ``(n, 3)`` as ``[x, y, theta]`` rows and ``n-1`` positive intervals."""

    poses: np.ndarray
    dts: np.ndarray

    def __post_init__(self):
        poses = np.array(self.poses, dtype=float).reshape(-1, 3)
        dts = np.array(self.dts, dtype=float).reshape(-1)
        if len(poses) < 2:
            raise ValueError("a band needs at least two poses")
        if len(dts) != len(poses) - 1:
            raise ValueError(f"expected {len(poses) - 1} intervals, got {len(dts)}")
        if not (np.all(np.isfinite(poses)) and np.all(np.isfinite(dts))):
            raise ValueError("band contains non-finite values")
        if np.any(dts < DT_MIN * (1.0 - 1e-9)):
            raise ValueError(f"time intervals must be >= {DT_MIN}")
        poses[:, 2] = normalize_angle(poses[:, 2])
        poses.setflags(write=False)
        dts.setflags(write=False)
        object.__setattr__(self, "poses", poses)
        object.__setattr__(self, "dts", dts)

    @classmethod
    def from_poses(cls, poses: Sequence[Pose], dts) -> "Band":
        return cls(np.array([[p.x, p.y, p.theta] for p in poses]), dts)

    @property
    def n(self) -> int:
        return len(self.poses)

    @property
    def positions(self) -> np.ndarray:
        return self.poses[:, :2]

    @property
    def headings(self) -> np.ndarray:
        return self.poses[:, 2]

    @property
    def total_time(self) -> float:
        return float(self.dts.sum())

    def pose(self, k: int) -> Pose:
        return Pose(*self.poses[k])

    def pose_list(self) -> list[Pose]:
        return [Pose(*row) for row in self.poses]

    def __eq__(self, other):
        if not isinstance(other, Band):
            return NotImplemented
        return np.array_equal(self.poses, other.poses) and np.array_equal(self.dts, other.dts)

    __hash__ = None


# -- finite-difference kinematics -------------------------------------------


def _check_index(k: int, upper: int, what: str) -> None:
    if not 0 <= k < upper:
        raise IndexError(f"{what} index {k} out of range [0, {upper})")


def velocities(b: Band) -> np.ndarray:
    """World-frame velocity of every interval, shape ``(n-1, 2)``."""
    return np.diff(b.positions, axis=0) / b.dts[:, None]


def accelerations(b: Band) -> np.ndarray:
    """World-frame acceleration at every interior pose, shape ``(n-2, 2)``."""
    v = velocities(b)
    return 2.0 * np.diff(v, axis=0) / (b.dts[:-1] + b.dts[1:])[:, None]


def angular_rates(b: Band) -> np.ndarray:
    return angle_diff(b.headings[1:], b.headings[:-1]) / b.dts


def angular_accels(b: Band) -> np.ndarray:
    # divides by the leading interval only, not the two-interval mean
    w = angular_rates(b)
    return np.diff(w) / b.dts[:-1]


def velocity(b: Band, k: int) -> Vec2:
    _check_index(k, b.n - 1, "velocity")
    return Vec2(*velocities(b)[k])


def acceleration(b: Band, k: int) -> Vec2:
    _check_index(k, b.n - 2, "acceleration")
    return Vec2(*accelerations(b)[k])


def angular_rate(b: Band, k: int) -> float:
    _check_index(k, b.n - 1, "angular rate")
    return float(angular_rates(b)[k])


def angular_accel(b: Band, k: int) -> float:
    _check_index(k, b.n - 2, "angular acceleration")
    return float(angular_accels(b)[k])


def penalty(c, sigma: float) -> float:
    """``sigma * sum(min(0, c)^2)``."""
    c = np.asarray(c, dtype=float)
    return float(sigma * np.sum(np.minimum(0.0, c) ** 2))


# -- initial trajectory ------------------------------------------------------


def annotate_orientation(path, target, convention: str = "bearing") -> list[Pose]:
    """Attach to each path position the heading that faces ``target``."""
    pts = _xy(path)
    if len(pts) == 0:
        raise ValueError("empty path")
    d = np.hypot(pts[:, 0] - target[0], pts[:, 1] - target[1])
    if np.any(d == 0.0):
        raise ValueError("a path point coincides with the orientation target")
    th = required_orientations(pts, target, convention)
    return [Pose(x, y, t) for (x, y), t in zip(pts, th)]


def tangent_headings(positions: np.ndarray) -> np.ndarray:
    """Heading of each point along the direction of travel (last copies the previous)."""
    positions = np.asarray(positions, dtype=float)
    if len(positions) < 2:
        return np.zeros(len(positions))
    d = np.diff(positions, axis=0)
    th = np.arctan2(d[:, 1], d[:, 0])
    # coincident points inherit the previous heading
    moving = np.hypot(d[:, 0], d[:, 1]) > 1e-12
    for i in range(len(th)):
        if not moving[i]:
            th[i] = th[i - 1] if i > 0 else 0.0
    return np.append(th, th[-1])


def _xy(points) -> np.ndarray:
    rows = [(p.x, p.y) if isinstance(p, Pose) else (p[0], p[1]) for p in points]
    return np.array(rows, dtype=float).reshape(-1, 2)


def arc_lengths(traj) -> np.ndarray:
    pts = _xy(traj)
    return np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])


def resample_path(traj, spacing: float) -> list[tuple[float, float]]:
    """Positions spaced evenly by arc length, keeping both endpoints.

    Spacing is rounded so the last step is not a sliver.
    """
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    pts = _xy(traj)
    if len(pts) < 2:
        return [tuple(p) for p in pts]
    s = arc_lengths(traj)
    if s[-1] == 0.0:
        return [tuple(pts[0])]
    m = max(1, int(round(s[-1] / spacing)))
    ss = np.linspace(0.0, s[-1], m + 1)
    x = np.interp(ss, s, pts[:, 0])
    y = np.interp(ss, s, pts[:, 1])
    x[0], y[0], x[-1], y[-1] = pts[0, 0], pts[0, 1], pts[-1, 0], pts[-1, 1]
    return list(zip(x.tolist(), y.tolist()))


def segment_first(traj: Sequence[Pose], L: float) -> list[Pose]:
    """Longest prefix of ``traj`` whose arc length stays within ``L``.

    Returns at least two poses whenever ``traj`` has two.
    """
    if not L > 0:
        raise ValueError("segment length must be positive")
    traj = list(traj)
    if not traj:
        raise ValueError("empty trajectory")
    s = arc_lengths(traj)
    m = int(np.searchsorted(s, L, side="right"))
    return traj[: max(m, min(2, len(traj)))]


def seed_band(prefix: Sequence[Pose], v_ref: float, dt_min: float = DT_MIN) -> Band:
    """Band over ``prefix`` with intervals sized for travel at ``v_ref``."""
    if len(prefix) < 2:
        raise ValueError("a band needs at least two poses")
    if not v_ref > 0:
        raise ValueError("v_ref must be positive")
    arr = np.array([[p.x, p.y, p.theta] for p in prefix])
    dist = np.hypot(*np.diff(arr[:, :2], axis=0).T)
    return Band(arr, np.maximum(dt_min, dist / v_ref))


# -- soft constraints ----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ProblemContext:
    """Everything besides the band that the objective depends on.

    ``task=None`` drops the per-pose orientation term (plain TEB).
    ``start_velocity`` is the robot's current world-frame ``(vx, vy, omega)``;
    when given, the change from it to the first interval's velocity is held
    to the acceleration limits as well.
    """

    limits: KinematicLimits = field(default_factory=KinematicLimits)
    weights: PenaltyWeights = field(default_factory=PenaltyWeights)
    obstacles: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    r_roi: float = 0.0
    task: OrientationTask | None = None
    convention: str = "bearing"
    start_velocity: tuple[float, float, float] | None = None

    def __post_init__(self):
        object.__setattr__(self, "obstacles", obstacle_array(self.obstacles).astype(float))
        if self.start_velocity is not None:
            sv = tuple(float(v) for v in self.start_velocity)
            if len(sv) != 3 or not all(math.isfinite(v) for v in sv):
                raise ValueError("start_velocity must be three finite numbers")
            object.__setattr__(self, "start_velocity", sv)


# residual blocks in stacking order
BLOCKS = ("time", "velocity", "acceleration", "omega", "alpha", "obstacle", "orientation",
          "start_acceleration", "start_alpha")

# below this distance to the target the bearing is treated as undefined
_TARGET_EPS = 1e-9


def body_velocities(b: Band) -> np.ndarray:
    """Interval velocities rotated into the frame of each interval's start pose."""
    v = velocities(b)
    th = b.headings[:-1]
    c, s = np.cos(th), np.sin(th)
    return np.column_stack([c * v[:, 0] + s * v[:, 1], -s * v[:, 0] + c * v[:, 1]])


def body_accelerations(b: Band) -> np.ndarray:
    a = accelerations(b)
    th = b.headings[:-2]
    c, s = np.cos(th), np.sin(th)
    return np.column_stack([c * a[:, 0] + s * a[:, 1], -s * a[:, 0] + c * a[:, 1]])


def _two_sided(values: np.ndarray, bound) -> np.ndarray:
    """Margins ``bound - v`` and ``bound + v`` per component, interleaved."""
    bound = np.broadcast_to(np.asarray(bound, dtype=float), values.shape[1:])
    out = np.empty((len(values), 2 * values.shape[1]))
    out[:, 0::2] = bound - values
    out[:, 1::2] = bound + values
    return out


def start_accelerations(b: Band, start_velocity) -> tuple[np.ndarray, float]:
    """Body-frame acceleration and angular acceleration out of the current velocity."""
    v0 = velocities(b)[0]
    T0 = b.dts[0]
    a = (v0 - np.asarray(start_velocity[:2])) / T0
    th = b.headings[0]
    c, s = math.cos(th), math.sin(th)
    alpha = (angular_rates(b)[0] - start_velocity[2]) / T0
    return np.array([c * a[0] + s * a[1], -s * a[0] + c * a[1]]), float(alpha)


def orientation_errors(b: Band, target, convention: str = "bearing") -> np.ndarray:
    """Signed heading error per pose; zero where a pose sits on the target."""
    req = required_orientations(b.positions, target, convention)
    err = angle_diff(b.headings, req)
    near = np.hypot(b.positions[:, 0] - target[0], b.positions[:, 1] - target[1]) < _TARGET_EPS
    return np.where(near, 0.0, err)


def margins(b: Band, ctx: ProblemContext) -> dict[str, np.ndarray]:
    """Constraint margins per block; satisfied where ``>= 0``."""
    lim = ctx.limits
    out = {
        "velocity": _two_sided(body_velocities(b), lim.v_max_body),
        "acceleration": _two_sided(body_accelerations(b), lim.a_max_body),
        "omega": _two_sided(angular_rates(b)[:, None], lim.omega_max),
        "alpha": _two_sided(angular_accels(b)[:, None], lim.alpha_max),
    }
    if len(ctx.obstacles):
        d, _ = clearance_and_gradient(b.positions, ctx.obstacles)
        out["obstacle"] = d - ctx.r_roi
    else:
        out["obstacle"] = np.zeros(0)
    if ctx.task is not None:
        err = orientation_errors(b, ctx.task.target, ctx.convention)
        out["orientation"] = ctx.task.theta_max - np.abs(err)
    else:
        out["orientation"] = np.zeros(0)
    if ctx.start_velocity is not None:
        a, al = start_accelerations(b, ctx.start_velocity)
        out["start_acceleration"] = _two_sided(a[None], lim.a_max_body).ravel()
        out["start_alpha"] = np.array([lim.alpha_max - al, lim.alpha_max + al])
    else:
        out["start_acceleration"] = np.zeros(0)
        out["start_alpha"] = np.zeros(0)
    return out


def block_weights(w: PenaltyWeights) -> dict[str, float]:
    return {
        "velocity": w.sigma_v,
        "acceleration": w.sigma_a,
        "omega": w.sigma_omega,
        "alpha": w.sigma_alpha,
        "obstacle": w.sigma_o,
        "orientation": w.sigma_theta,
        "start_acceleration": w.sigma_a,
        "start_alpha": w.sigma_alpha,
    }


def residual_vector(b: Band, ctx: ProblemContext) -> np.ndarray:
    m = margins(b, ctx)
    sig = block_weights(ctx.weights)
    parts = [b.dts]
    for name in BLOCKS[1:]:
        parts.append(math.sqrt(sig[name]) * np.minimum(0.0, m[name]).ravel())
    return np.concatenate(parts)


def residuals(
    b: Band,
    limits: KinematicLimits,
    weights: PenaltyWeights,
    obstacles: Sequence[RectObstacle] | np.ndarray,
    task: OrientationTask | None,
    r_roi: float = 0.0,
    convention: str = "bearing",
) -> np.ndarray:
    """Stacked least-squares residuals whose squared norm is the soft objective."""
    ctx = ProblemContext(limits, weights, obstacle_array(obstacles), r_roi, task, convention)
    return residual_vector(b, ctx)
