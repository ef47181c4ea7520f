"""Closed-loop 2D kinematic simulation of an omni-directional robot."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .band import KinematicLimits
from .geometry import Pose, Vec2, angle_diff, normalize_angle, rot_body_to_world
from .gridmap import PlanningError, clearance_and_gradient, obstacle_array
from .planner import Command, OrientationAwarePlanner, PlannerConfig, required_orientation

if TYPE_CHECKING:
    from .scenario import Scenario


class SimulationError(Exception):
    pass


class CollisionError(SimulationError):
    def __init__(self, message: str, time: float, pose: Pose):
        super().__init__(message)
        self.time = time
        self.pose = pose


class TimeCapExceeded(SimulationError):
    pass


@dataclass(frozen=True)
class SimConfig:
    control_period: float = 0.1
    physics_step: float = 0.01
    time_cap: float = 60.0
    noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (self.control_period > 0 and self.physics_step > 0):
            raise ValueError("control_period and physics_step must be positive")
        if self.physics_step > self.control_period:
            raise ValueError("physics_step may not exceed control_period")
        if not self.time_cap > 0:
            raise ValueError("time_cap must be positive")
        if self.noise < 0:
            raise ValueError("noise bound must be nonnegative")


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    v_body: Vec2 = Vec2(0.0, 0.0)
    omega: float = 0.0
    time: float = 0.0


@dataclass(frozen=True)
class TraceSample:
    time: float
    pose: Pose
    command: Command
    theta_required: float
    delta_theta: float
    clearance: float
    footprint_clearance: float = math.nan


@dataclass
class SimulationResult:
    trace: list[TraceSample]
    completed: bool
    goals_reached: int
    min_footprint_clearance: float
    mode: str = "oateb"
    theta_max: float = 0.0
    solver_iterations: list[int] = field(default_factory=list, repr=False)


def _rate_limit(current: float, target: float, max_change: float) -> float:
    return current + min(max(target - current, -max_change), max_change)


def integrate(state: RobotState, cmd: Command, dt: float, limits: KinematicLimits | None = None) -> RobotState:
    """Advance one Euler step.

    With ``limits`` the velocity moves toward the command no faster than the
    acceleration bounds allow and is then clipped to the speed bounds.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    vx, vy, w = cmd.v_body.x, cmd.v_body.y, cmd.omega
    if limits is not None:
        ax, ay = limits.a_max_body
        vx = _rate_limit(state.v_body.x, vx, ax * dt)
        vy = _rate_limit(state.v_body.y, vy, ay * dt)
        w = _rate_limit(state.omega, w, limits.alpha_max * dt)
        vxm, vym = limits.v_max_body
        vx = min(max(vx, -vxm), vxm)
        vy = min(max(vy, -vym), vym)
        w = min(max(w, -limits.omega_max), limits.omega_max)
    p = state.pose
    d = rot_body_to_world(p.theta, (vx * dt, vy * dt))
    pose = Pose(p.x + d.x, p.y + d.y, normalize_angle(p.theta + w * dt))
    return RobotState(pose, Vec2(vx, vy), w, state.time + dt)


def footprint_corners(pose: Pose, length: float, width: float) -> np.ndarray:
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    R = np.array([[c, -s], [s, c]])
    return local @ R.T + np.array([pose.x, pose.y])


def _point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Distances from points ``p (m, 2)`` to segments ``a->b (k, 2)``, shape ``(m, k)``."""
    ab = b - a
    t = np.einsum("mkj,kj->mk", p[:, None, :] - a[None], ab) / np.einsum("kj,kj->k", ab, ab)
    t = np.clip(t, 0.0, 1.0)
    closest = a[None] + t[..., None] * ab[None]
    return np.linalg.norm(p[:, None, :] - closest, axis=-1)


def _polygon_signed_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Signed distance between convex polygons (vertices in order).

    Positive separation when disjoint; minus the smallest axis overlap when
    they intersect.
    """
    axes = []
    for P in (A, B):
        e = np.roll(P, -1, axis=0) - P
        n = np.column_stack([-e[:, 1], e[:, 0]])
        axes.append(n / np.linalg.norm(n, axis=1, keepdims=True))
    axes = np.vstack(axes)
    pa, pb = A @ axes.T, B @ axes.T
    overlap = np.minimum(pa.max(0), pb.max(0)) - np.maximum(pa.min(0), pb.min(0))
    if np.all(overlap > 0):
        return -float(overlap.min())
    da = _point_segment_distance(A, B, np.roll(B, -1, axis=0)).min()
    db = _point_segment_distance(B, A, np.roll(A, -1, axis=0)).min()
    return float(min(da, db))


def footprint_clearance(pose: Pose, length: float, width: float, obstacles) -> float:
    """Signed distance from the robot rectangle to the nearest obstacle rectangle."""
    rects = obstacle_array(obstacles)
    if len(rects) == 0:
        return math.inf
    A = footprint_corners(pose, length, width)
    best = math.inf
    for x0, y0, x1, y1 in rects:
        B = np.array([[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
        best = min(best, _polygon_signed_distance(A, B))
    return best


class Simulator:
    """Runs a planner against the scenario's world until all goals are reached."""

    def __init__(self, scenario: "Scenario", planner_cfg: PlannerConfig | None = None, sim: SimConfig | None = None):
        self.scenario = scenario
        self.cfg = planner_cfg or scenario.planner
        self.sim = sim or scenario.sim
        self.obstacles = obstacle_array(scenario.world_obstacles())
        self.length = scenario.robot.length
        self.width = scenario.robot.width
        self.circumradius = 0.5 * math.hypot(self.length, self.width)

    def _collides(self, pose: Pose) -> float | None:
        """Footprint clearance when it could be negative, else ``None``."""
        d, _ = clearance_and_gradient(np.array([[pose.x, pose.y]]), self.obstacles)
        if d[0] > self.circumradius:
            return None
        fc = footprint_clearance(pose, self.length, self.width, self.obstacles)
        return fc if fc < 0 else None

    def _sample(self, state: RobotState, cmd: Command, target) -> TraceSample:
        p = state.pose
        if p.distance_to(target) > 0:
            req = required_orientation((p.x, p.y), target, self.cfg.convention)
        else:
            req = p.theta
        d, _ = clearance_and_gradient(np.array([[p.x, p.y]]), self.obstacles)
        return TraceSample(
            time=state.time,
            pose=p,
            command=cmd,
            theta_required=req,
            delta_theta=abs(angle_diff(p.theta, req)),
            clearance=float(d[0]),
            footprint_clearance=footprint_clearance(p, self.length, self.width, self.obstacles),
        )

    def run(self) -> SimulationResult:
        sc, sim, cfg = self.scenario, self.sim, self.cfg
        grid = sc.grid()
        planner = OrientationAwarePlanner(grid, self.obstacles, sc.goals, cfg, sc.robot.r_roi)
        rng = np.random.default_rng(sim.seed)
        state = RobotState(sc.start)
        trace: list[TraceSample] = []
        iterations: list[int] = []
        substeps = max(1, int(round(sim.control_period / sim.physics_step)))
        h = sim.control_period / substeps
        n_steps = int(math.ceil(sim.time_cap / sim.control_period))
        target = sc.goals[0].orientation_target
        for i in range(n_steps + 1):
            observed = state.pose
            if sim.noise > 0:
                nx, ny, nt = rng.uniform(-sim.noise, sim.noise, 3)
                observed = Pose(observed.x + nx, observed.y + ny, observed.theta + nt)
            cmd, diag = planner.step(observed, (state.v_body.x, state.v_body.y, state.omega))
            if diag.report is not None:
                iterations.append(diag.report.iterations)
            if not planner.sequencer.done:
                target = planner.sequencer.active.orientation_target
            trace.append(self._sample(state, cmd, target))
            if diag.done:
                return SimulationResult(
                    trace, True, planner.sequencer.index,
                    min(s.footprint_clearance for s in trace), cfg.mode, cfg.theta_max, iterations,
                )
            if i == n_steps:
                break
            for k in range(substeps):
                state = integrate(state, cmd, h, cfg.limits)
                # integer tick count keeps sample times free of accumulated rounding
                state = RobotState(state.pose, state.v_body, state.omega, (i * substeps + k + 1) * h)
                fc = self._collides(state.pose)
                if fc is not None:
                    raise CollisionError(
                        f"footprint penetrates an obstacle by {-fc:.3f} m at t={state.time:.2f} s",
                        state.time, state.pose,
                    )
        raise TimeCapExceeded(f"goals not completed within {sim.time_cap} s "
                              f"({planner.sequencer.index}/{len(sc.goals)} reached)")


def run(scenario: "Scenario", planner_cfg: PlannerConfig | None = None, sim: SimConfig | None = None) -> SimulationResult:
    """Simulate ``scenario`` in closed loop; raises on collision, time cap or planning failure."""
    return Simulator(scenario, planner_cfg, sim).run()


__all__ = [
    "CollisionError",
    "PlanningError",
    "RobotState",
    "SimConfig",
    "SimulationError",
    "SimulationResult",
    "Simulator",
    "TimeCapExceeded",
    "TraceSample",
    "footprint_clearance",
    "integrate",
    "run",
]
