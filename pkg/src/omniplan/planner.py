"""Goal specification, global/local planning and the receding-horizon loop."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .band import (
    DT_MIN,
    Band,
    KinematicLimits,
    OrientationTask,
    PenaltyWeights,
    ProblemContext,
    annotate_orientation,
    margins,
    resample_path,
    segment_first,
    seed_band,
    tangent_headings,
    velocities,
)
from .geometry import Pose, Vec2, angle_diff, required_orientations, rot_body_to_world, rot_world_to_body
from .gridmap import OccupancyGrid, StartOccupiedError, a_star, obstacle_array
from .optimizer import SolveReport, SolverConfig, solve

MODES = ("oateb", "teb")


def required_orientation(p, target, convention: str = "bearing") -> float:
    """Heading at ``p`` that faces ``target``."""
    if p[0] == target[0] and p[1] == target[1]:
        raise ValueError("orientation is undefined when the robot sits on the target")
    return float(required_orientations(np.array([p[0], p[1]]), target, convention)[0])


@dataclass(frozen=True)
class TaskGoal:
    """Where to go (``position_goal``) and what to keep facing (``orientation_target``)."""

    position_goal: Vec2
    orientation_target: Vec2

    def __post_init__(self):
        pg = Vec2(*map(float, self.position_goal))
        ot = Vec2(*map(float, self.orientation_target))
        if not all(math.isfinite(v) for v in (*pg, *ot)):
            raise ValueError("goal coordinates must be finite")
        object.__setattr__(self, "position_goal", pg)
        object.__setattr__(self, "orientation_target", ot)


@dataclass(frozen=True)
class PlannerConfig:
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    weights: PenaltyWeights = field(default_factory=PenaltyWeights)
    theta_max: float = math.radians(15.0)
    segment_length: float = 3.0
    v_ref: float = 1.0
    goal_tolerance: float = 0.15
    mode: str = "oateb"
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(max_iterations=100))
    s_tolerance: float | None = None
    convention: str = "bearing"
    replan_drift: float = 0.3
    infeasible_tolerance: float = 0.1
    pose_spacing: float = 0.25
    path_margin: float = 0.15

    def __post_init__(self):
        if not self.segment_length > 0:
            raise ValueError("segment_length must be positive")
        if not 0 < self.theta_max <= math.pi:
            raise ValueError("theta_max must lie in (0, pi]")
        if not self.v_ref > 0:
            raise ValueError("v_ref must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.s_tolerance is not None and self.goal_tolerance < self.s_tolerance:
            raise ValueError("goal_tolerance must be >= s_tolerance")
        if self.convention not in ("bearing", "literal"):
            raise ValueError(f"unknown convention {self.convention!r}")
        if self.path_margin < 0:
            raise ValueError("path_margin must be nonnegative")
        if not self.pose_spacing > 0:
            raise ValueError("pose_spacing must be positive")


@dataclass(frozen=True)
class Command:
    """Body-frame velocity command."""

    v_body: Vec2
    omega: float

    @classmethod
    def zero(cls) -> "Command":
        return cls(Vec2(0.0, 0.0), 0.0)


def problem_context(cfg: PlannerConfig, obstacles, r_roi: float, target) -> ProblemContext:
    task = OrientationTask(target, cfg.theta_max) if cfg.mode == "oateb" else None
    return ProblemContext(cfg.limits, cfg.weights, obstacle_array(obstacles), r_roi, task, cfg.convention)


def plan_global(
    grid: OccupancyGrid,
    start: Pose,
    goal: TaskGoal,
    s_tolerance: float | None = None,
    convention: str = "bearing",
) -> list[Pose]:
    """A* path from ``start`` to the position goal, headings facing the target.

    The first pose sits exactly at ``start``; the rest are cell centers.
    """
    path = a_star(grid, (start.x, start.y), goal.position_goal, s_tolerance)
    pts = [Vec2(start.x, start.y)] + list(path.points[1:])
    return annotate_orientation(pts, goal.orientation_target, convention)


def coarsen(plan: Sequence[Pose], spacing: float, target, mode: str = "oateb",
            convention: str = "bearing") -> list[Pose]:
    """Resample a grid plan to band pose spacing and re-derive the headings.

    ``oateb`` headings face ``target``; ``teb`` headings follow the direction of
    travel except the last, which keeps the plan's goal heading.
    """
    pts = resample_path(plan, spacing)
    if mode == "oateb":
        return annotate_orientation(pts, target, convention)
    th = tangent_headings(np.array(pts))
    th[-1] = plan[-1].theta
    return [Pose(x, y, t) for (x, y), t in zip(pts, th)]


def _baseline_headings(poses: Sequence[Pose], start_heading: float, end_heading: float | None) -> np.ndarray:
    th = tangent_headings(np.array([[p.x, p.y] for p in poses]))
    th[0] = start_heading
    if end_heading is not None:
        th[-1] = end_heading
    return th


def plan_local(
    global_plan: Sequence[Pose],
    cfg: PlannerConfig,
    ctx: ProblemContext,
    *,
    reaches_goal: bool | None = None,
) -> tuple[Band, SolveReport]:
    """Optimize the first ``segment_length`` meters of ``global_plan``.

    In ``teb`` mode the headings are re-seeded along the direction of travel,
    keeping the start heading and, when the segment ends at the global goal,
    the goal heading.
    """
    if not global_plan:
        raise ValueError("empty global plan")
    start_heading = global_plan[0].theta
    global_plan = coarsen(global_plan, cfg.pose_spacing, ctx.task.target if ctx.task else None,
                          "oateb" if ctx.task else "teb", cfg.convention)
    global_plan[0] = Pose(global_plan[0].x, global_plan[0].y, start_heading)
    prefix = segment_first(global_plan, cfg.segment_length)
    if len(prefix) < 2:
        prefix = [prefix[0], prefix[0]]
    if reaches_goal is None:
        reaches_goal = len(prefix) == len(global_plan)
    if cfg.mode == "teb":
        th = _baseline_headings(prefix, prefix[0].theta, prefix[-1].theta if reaches_goal else None)
        prefix = [Pose(p.x, p.y, t) for p, t in zip(prefix, th)]
    b0 = seed_band(prefix, cfg.v_ref, cfg.solver.dt_min)
    return solve(b0, ctx, cfg.solver)


def extract_command(b: Band, limits: KinematicLimits) -> Command:
    """First-interval velocity in the frame of the first pose, clamped to limits.

    Translation is scaled uniformly so the direction of travel survives clamping.
    """
    v = velocities(b)[0]
    th0 = b.poses[0, 2]
    vb = rot_world_to_body(th0, v)
    vx_max, vy_max = limits.v_max_body
    scale = min(1.0, vx_max / abs(vb.x) if vb.x else 1.0, vy_max / abs(vb.y) if vb.y else 1.0)
    vb = Vec2(min(max(vb.x * scale, -vx_max), vx_max), min(max(vb.y * scale, -vy_max), vy_max))
    w = angle_diff(b.poses[1, 2], th0) / b.dts[0]
    w = min(max(w, -limits.omega_max), limits.omega_max)
    return Command(vb, float(w))


class GoalSequencer:
    """Hands out goals in a fixed order; the active index only moves forward."""

    def __init__(self, goals: Sequence[TaskGoal]):
        if not goals:
            raise ValueError("at least one goal is required")
        self.goals = list(goals)
        self.index = 0

    @property
    def done(self) -> bool:
        return self.index >= len(self.goals)

    @property
    def active(self) -> TaskGoal | None:
        return None if self.done else self.goals[self.index]

    def advance(self) -> None:
        if not self.done:
            self.index += 1


@dataclass
class StepDiagnostics:
    goal_index: int
    done: bool = False
    replanned: bool = False
    band: Band | None = None
    report: SolveReport | None = None
    delta_theta: float = 0.0

    @property
    def objective(self) -> float:
        return self.report.final_objective if self.report else 0.0


class OrientationAwarePlanner:
    """Receding-horizon planner for one robot.

    Each :meth:`step` advances the goal sequencer if needed, replans the global
    path when the goal changes or the robot drifts off it, seeds a fresh band
    along the path ahead and returns the first command.

    ``obstacles`` are the un-inflated rectangles (border walls included) used
    for clearance; ``r_roi`` is the clearance each pose must keep from them.
    """

    def __init__(
        self,
        grid: OccupancyGrid,
        obstacles,
        goals: Sequence[TaskGoal],
        cfg: PlannerConfig | None = None,
        r_roi: float = 0.0,
    ):
        self.grid = grid
        self.obstacles = obstacle_array(obstacles)
        self.cfg = cfg or PlannerConfig()
        self.r_roi = float(r_roi)
        self.sequencer = GoalSequencer(goals)
        self._global: list[Pose] | None = None
        self._cursor = 0
        self._band: Band | None = None
        self._ctx: ProblemContext | None = None
        self._needs_replan = True

    @property
    def global_plan(self) -> list[Pose] | None:
        return self._global

    @property
    def band(self) -> Band | None:
        return self._band

    def goal_reached(self, state: Pose, goal: TaskGoal) -> bool:
        if state.distance_to(goal.position_goal) > self.cfg.goal_tolerance:
            return False
        if state.distance_to(goal.orientation_target) == 0.0:
            return True
        req = required_orientation((state.x, state.y), goal.orientation_target, self.cfg.convention)
        return abs(angle_diff(state.theta, req)) <= self.cfg.theta_max

    def _replan(self, state: Pose, goal: TaskGoal) -> None:
        start = state
        if not self.grid.is_free_at((state.x, state.y)):
            # drifted into the inflated zone: search from the nearest free cell
            cell = self.grid.nearest_free((state.x, state.y))
            if cell is None:
                raise StartOccupiedError(f"no free cell near {state}")
            c = self.grid.center_of(cell)
            start = Pose(c.x, c.y, state.theta)
        plan = plan_global(self.grid, start, goal, self.cfg.s_tolerance, self.cfg.convention)
        if start is not state:
            pts = [(state.x, state.y)] + [(p.x, p.y) for p in plan]
            plan = annotate_orientation(pts, goal.orientation_target, self.cfg.convention)
        plan = coarsen(plan, self.cfg.pose_spacing, goal.orientation_target, self.cfg.mode, self.cfg.convention)
        self._global = plan
        self._cursor = 0
        self._band = None
        self._ctx = problem_context(self.cfg, self.obstacles, self.r_roi, goal.orientation_target)
        self._needs_replan = False

    def _advance_cursor(self, state: Pose) -> float:
        """Move the cursor to the closest global segment ahead; return the distance to it."""
        g = self._global
        hi = min(len(g), self._cursor + 40)
        pts = np.array([[p.x, p.y] for p in g[self._cursor:hi]])
        q = np.array([state.x, state.y])
        if len(pts) == 1:
            return float(np.hypot(*(pts[0] - q)))
        a, ab = pts[:-1], np.diff(pts, axis=0)
        den = np.einsum("ij,ij->i", ab, ab)
        t = np.clip(np.einsum("ij,ij->i", q - a, ab) / np.where(den > 0, den, 1.0), 0.0, 1.0)
        d = np.hypot(*(a + t[:, None] * ab - q).T)
        j = int(np.argmin(d))
        self._cursor += j
        return float(d[j])

    def _seed(self, state: Pose) -> Band:
        """Band from ``state`` along the global path ahead of the cursor, up to ``segment_length``."""
        g = self._global
        cfg = self.cfg
        k = self._cursor + 1
        # a global point right next to the robot would make a degenerate first interval
        if k < len(g) - 1 and math.hypot(g[k].x - state.x, g[k].y - state.y) < 0.5 * cfg.pose_spacing:
            k += 1
        poses = [state]
        length = 0.0
        while k < len(g):
            step = math.hypot(g[k].x - poses[-1].x, g[k].y - poses[-1].y)
            if len(poses) > 1 and length + step > cfg.segment_length:
                break
            poses.append(g[k])
            length += step
            k += 1
        if len(poses) == 1:
            poses.append(g[-1])
            k = len(g)
        reaches_goal = k == len(g)
        if cfg.mode == "teb":
            th = _baseline_headings(poses, state.theta, g[-1].theta if reaches_goal else None)
            poses = [Pose(p.x, p.y, t) for p, t in zip(poses, th)]
        return seed_band(poses, cfg.v_ref, cfg.solver.dt_min)

    def step(self, state: Pose, velocity=None) -> tuple[Command, StepDiagnostics]:
        """One control cycle from the observed ``state``.

        ``velocity`` is the current body-frame ``(vx, vy, omega)``, e.g. from
        odometry. Without it the band may start with an arbitrary velocity jump.
        """
        seq = self.sequencer
        while not seq.done and self.goal_reached(state, seq.active):
            seq.advance()
            self._needs_replan = True
        if seq.done:
            return Command.zero(), StepDiagnostics(goal_index=seq.index, done=True)
        goal = seq.active

        replanned = False
        if self._needs_replan or self._global is None:
            self._replan(state, goal)
            replanned = True
        elif self._advance_cursor(state) > self.cfg.replan_drift:
            self._replan(state, goal)
            replanned = True
        if replanned:
            self._advance_cursor(state)

        ctx = self._ctx
        if velocity is not None:
            vw = rot_body_to_world(state.theta, velocity[:2])
            ctx = replace(ctx, start_velocity=(vw.x, vw.y, float(velocity[2])))
        b0 = self._seed(state)
        band, report = solve(b0, ctx, self.cfg.solver)
        self._band = band
        # the first pose is the robot itself; only the free poses can be fixed by replanning
        m = margins(band, ctx)["obstacle"][1:]
        if len(m) and m.min() < -self.cfg.infeasible_tolerance:
            self._needs_replan = True

        req = required_orientation((state.x, state.y), goal.orientation_target, self.cfg.convention) \
            if state.distance_to(goal.orientation_target) > 0 else state.theta
        diag = StepDiagnostics(
            goal_index=seq.index,
            replanned=replanned,
            band=band,
            report=report,
            delta_theta=abs(angle_diff(state.theta, req)),
        )
        return extract_command(band, self.cfg.limits), diag
