"""Scenario files: TOML text describing the world, the robot, goals and settings.

Grammar (every section but ``workspace``, ``start`` and ``goals`` is optional)::

    name = "demo"                       # free text

    [workspace]
    min = [0.0, 0.0]                    # m
    max = [8.0, 5.0]                    # m
    resolution = 0.05                   # m per cell

    [robot]
    length = 0.6                        # m, along body x'
    width = 0.45                        # m, along body y'
    inflation = 0.4                     # m, safety margin on top of the footprint

    [start]
    x = 1.0
    y = 1.0
    theta = 0.0                         # rad; or theta_deg

    [[goals]]                           # visited in order
    position = [7.0, 4.0]
    target = [4.0, 4.5]                 # orientation target

    [[obstacles]]                       # axis-aligned rectangles
    min = [2.5, 0.0]
    max = [3.1, 1.8]

    [planner]
    mode = "oateb"                      # or "teb"
    theta_max_deg = 15.0                # or theta_max in rad
    segment_length = 3.0
    v_ref = 1.0
    goal_tolerance = 0.15
    s_tolerance = 0.1                   # default: two cells
    convention = "bearing"              # or "literal"
    replan_drift = 0.3
    infeasible_tolerance = 0.1
    pose_spacing = 0.25                 # m between band poses
    path_margin = 0.15                  # m of extra clearance for the grid search

    [planner.limits]
    v_max = [2.0, 2.0]                  # m/s per body axis
    a_max = [3.0, 3.0]                  # m/s^2 per body axis
    omega_max = 3.14159                 # rad/s
    alpha_max = 6.28319                 # rad/s^2

    [planner.weights]
    sigma_v = 1.0
    sigma_a = 3.0
    sigma_omega = 1.0
    sigma_alpha = 3.0
    sigma_o = 50.0
    sigma_theta = 1.0

    [planner.solver]
    max_iterations = 100
    initial_damping = 1e-3
    damping_up = 2.0                    # first growth factor after a rejected step
    damping_down = 0.333                # smallest shrink factor after an accepted step
    rel_tolerance = 1e-6
    abs_tolerance = 1e-10
    jacobian_mode = "analytic"
    dt_min = 1e-3

    [sim]
    control_period = 0.1
    physics_step = 0.01
    time_cap = 60.0
    noise = 0.0                         # bound of uniform pose noise
    seed = 0

Unknown keys are rejected. Angles given as ``*_deg`` are converted once on
load; :func:`dump_scenario` always writes radians so a round trip is exact.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

import tomli
import tomli_w

from .band import KinematicLimits, PenaltyWeights
from .geometry import Pose, Vec2
from .gridmap import OccupancyGrid, RectObstacle, clearance, rasterize, workspace_walls
from .optimizer import SolverConfig
from .planner import PlannerConfig, TaskGoal
from .simulator import SimConfig

PACKAGED = ("sim_paper", "four_corners")


class ScenarioError(Exception):
    """Invalid scenario; ``field`` names the offending key path, ``line`` the syntax error line."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        self.field = field
        self.line = line
        prefix = f"line {line}: " if line is not None else (f"{field}: " if field else "")
        super().__init__(prefix + message)


@dataclass(frozen=True)
class RobotSpec:
    length: float = 0.6
    width: float = 0.45
    inflation: float = 0.4

    @property
    def circumradius(self) -> float:
        return 0.5 * math.hypot(self.length, self.width)

    @property
    def r_roi(self) -> float:
        """Clearance a point robot must keep: circumscribed radius plus inflation."""
        return self.circumradius + self.inflation


@dataclass(frozen=True)
class Scenario:
    bounds: tuple[tuple[float, float], tuple[float, float]]
    start: Pose
    goals: tuple[TaskGoal, ...]
    resolution: float = 0.05
    obstacles: tuple[RectObstacle, ...] = ()
    robot: RobotSpec = field(default_factory=RobotSpec)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    name: str = ""

    def world_obstacles(self) -> list[RectObstacle]:
        """Obstacles plus the four border walls."""
        return list(self.obstacles) + workspace_walls(self.bounds)

    def grid(self) -> OccupancyGrid:
        """Search grid; cells closer than the band clearance plus the path margin are blocked."""
        return rasterize(self.bounds, self.resolution, self.obstacles, self.robot.r_roi + self.planner.path_margin)

    def with_planner(self, **changes) -> "Scenario":
        from dataclasses import replace

        return replace(self, planner=replace(self.planner, **changes))


class _Section:
    """Typed access to one TOML table that remembers which keys were read."""

    def __init__(self, data, path: str):
        if not isinstance(data, dict):
            raise ScenarioError("expected a table", path)
        self.data = data
        self.path = path
        self.seen: set[str] = set()

    def _where(self, key: str) -> str:
        return f"{self.path}.{key}" if self.path else key

    def has(self, key: str) -> bool:
        return key in self.data

    def raw(self, key: str, default=None):
        self.seen.add(key)
        return self.data.get(key, default)

    def number(self, key: str, default=None, *, positive=False, nonnegative=False) -> float:
        self.seen.add(key)
        if key not in self.data:
            if default is None:
                raise ScenarioError("missing required value", self._where(key))
            return default
        v = self.data[key]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ScenarioError(f"expected a finite number, got {v!r}", self._where(key))
        v = float(v)
        if positive and not v > 0:
            raise ScenarioError(f"must be positive, got {v}", self._where(key))
        if nonnegative and v < 0:
            raise ScenarioError(f"must be nonnegative, got {v}", self._where(key))
        return v

    def integer(self, key: str, default: int) -> int:
        self.seen.add(key)
        v = self.data.get(key, default)
        if isinstance(v, bool) or not isinstance(v, int):
            raise ScenarioError(f"expected an integer, got {v!r}", self._where(key))
        return v

    def string(self, key: str, default: str, choices=None) -> str:
        self.seen.add(key)
        v = self.data.get(key, default)
        if not isinstance(v, str):
            raise ScenarioError(f"expected a string, got {v!r}", self._where(key))
        if choices and v not in choices:
            raise ScenarioError(f"must be one of {list(choices)}, got {v!r}", self._where(key))
        return v

    def pair(self, key: str, default=None) -> Vec2:
        self.seen.add(key)
        if key not in self.data:
            if default is None:
                raise ScenarioError("missing required value", self._where(key))
            return Vec2(*default)
        v = self.data[key]
        if (
            not isinstance(v, list)
            or len(v) != 2
            or not all(isinstance(c, (int, float)) and not isinstance(c, bool) and math.isfinite(c) for c in v)
        ):
            raise ScenarioError(f"expected [x, y], got {v!r}", self._where(key))
        return Vec2(float(v[0]), float(v[1]))

    def angle(self, key: str, default=None) -> float:
        """Radians from ``key`` or degrees from ``key_deg``; not both."""
        deg = f"{key}_deg"
        if self.has(key) and self.has(deg):
            raise ScenarioError(f"give either {key} or {deg}, not both", self._where(key))
        if self.has(deg):
            return math.radians(self.number(deg))
        self.seen.add(deg)
        return self.number(key, default)

    def sub(self, key: str) -> "_Section":
        self.seen.add(key)
        return _Section(self.data.get(key, {}), self._where(key))

    def finish(self) -> None:
        unknown = sorted(set(self.data) - self.seen)
        if unknown:
            raise ScenarioError(f"unknown key(s) {unknown}", self.path or None)


def _validated(factory, path: str, **kwargs):
    try:
        return factory(**kwargs)
    except ValueError as exc:
        raise ScenarioError(str(exc), path) from None


def _parse_planner(sec: _Section) -> PlannerConfig:
    d = PlannerConfig()
    lim_s = sec.sub("limits")
    limits = _validated(
        KinematicLimits, lim_s.path,
        v_max_body=lim_s.pair("v_max", d.limits.v_max_body),
        a_max_body=lim_s.pair("a_max", d.limits.a_max_body),
        omega_max=lim_s.number("omega_max", d.limits.omega_max, positive=True),
        alpha_max=lim_s.number("alpha_max", d.limits.alpha_max, positive=True),
    )
    lim_s.finish()
    w_s = sec.sub("weights")
    weights = _validated(
        PenaltyWeights, w_s.path,
        **{f.name: w_s.number(f.name, getattr(d.weights, f.name), nonnegative=True) for f in fields(PenaltyWeights)},
    )
    w_s.finish()
    s_s = sec.sub("solver")
    ds = d.solver
    solver = _validated(
        SolverConfig, s_s.path,
        max_iterations=s_s.integer("max_iterations", ds.max_iterations),
        initial_damping=s_s.number("initial_damping", ds.initial_damping, positive=True),
        damping_up=s_s.number("damping_up", ds.damping_up),
        damping_down=s_s.number("damping_down", ds.damping_down),
        rel_tolerance=s_s.number("rel_tolerance", ds.rel_tolerance, positive=True),
        abs_tolerance=s_s.number("abs_tolerance", ds.abs_tolerance, positive=True),
        jacobian_mode=s_s.string("jacobian_mode", ds.jacobian_mode, ("analytic", "finite-difference")),
        dt_min=s_s.number("dt_min", ds.dt_min, positive=True),
    )
    s_s.finish()
    s_tol = sec.number("s_tolerance", nonnegative=True) if sec.has("s_tolerance") else None
    theta_max = sec.angle("theta_max", d.theta_max)
    if not 0 < theta_max <= math.pi:
        raise ScenarioError("must lie in (0, pi]", sec._where("theta_max"))
    cfg = _validated(
        PlannerConfig, sec.path,
        limits=limits,
        weights=weights,
        theta_max=theta_max,
        segment_length=sec.number("segment_length", d.segment_length, positive=True),
        v_ref=sec.number("v_ref", d.v_ref, positive=True),
        goal_tolerance=sec.number("goal_tolerance", d.goal_tolerance, positive=True),
        mode=sec.string("mode", d.mode, ("oateb", "teb")),
        solver=solver,
        s_tolerance=s_tol,
        convention=sec.string("convention", d.convention, ("bearing", "literal")),
        replan_drift=sec.number("replan_drift", d.replan_drift, positive=True),
        infeasible_tolerance=sec.number("infeasible_tolerance", d.infeasible_tolerance, nonnegative=True),
        pose_spacing=sec.number("pose_spacing", d.pose_spacing, positive=True),
        path_margin=sec.number("path_margin", d.path_margin, nonnegative=True),
    )
    sec.finish()
    return cfg


def _syntax_line(exc: Exception) -> int | None:
    m = re.search(r"line (\d+)", str(exc))
    return int(m.group(1)) if m else None


def parse_scenario(text: str) -> Scenario:
    """Parse and validate scenario text; omitted fields take their defaults."""
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"syntax error: {exc}", line=_syntax_line(exc)) from None
    top = _Section(data, "")
    name = top.string("name", "")

    ws = top.sub("workspace")
    lo, hi = ws.pair("min"), ws.pair("max")
    if not (hi.x > lo.x and hi.y > lo.y):
        raise ScenarioError("max must exceed min componentwise", "workspace.max")
    resolution = ws.number("resolution", 0.05, positive=True)
    ws.finish()
    bounds = ((lo.x, lo.y), (hi.x, hi.y))

    rs = top.sub("robot")
    robot = RobotSpec(
        length=rs.number("length", 0.6, positive=True),
        width=rs.number("width", 0.45, positive=True),
        inflation=rs.number("inflation", 0.4, nonnegative=True),
    )
    rs.finish()

    obstacles = []
    raw_obs = top.raw("obstacles", [])
    if not isinstance(raw_obs, list):
        raise ScenarioError("expected an array of tables", "obstacles")
    for i, item in enumerate(raw_obs):
        os_ = _Section(item, f"obstacles[{i}]")
        a, b = os_.pair("min"), os_.pair("max")
        os_.finish()
        if not (a.x < b.x and a.y < b.y):
            raise ScenarioError("min must be below max componentwise", os_.path)
        if a.x < lo.x or a.y < lo.y or b.x > hi.x or b.y > hi.y:
            raise ScenarioError("obstacle leaves the workspace", os_.path)
        obstacles.append(RectObstacle(a, b))

    ss = top.sub("start")
    start = Pose(ss.number("x"), ss.number("y"), ss.angle("theta", 0.0))
    ss.finish()

    raw_goals = top.raw("goals", None)
    if not isinstance(raw_goals, list) or not raw_goals:
        raise ScenarioError("at least one [[goals]] entry is required", "goals")
    goals = []
    for i, item in enumerate(raw_goals):
        gs = _Section(item, f"goals[{i}]")
        g = TaskGoal(gs.pair("position"), gs.pair("target"))
        gs.finish()
        px, py = g.position_goal
        if not (lo.x < px < hi.x and lo.y < py < hi.y):
            raise ScenarioError("position goal lies outside the workspace", f"{gs.path}.position")
        goals.append(g)

    planner = _parse_planner(top.sub("planner"))

    sm = top.sub("sim")
    dsim = SimConfig()
    sim = _validated(
        SimConfig, sm.path,
        control_period=sm.number("control_period", dsim.control_period, positive=True),
        physics_step=sm.number("physics_step", dsim.physics_step, positive=True),
        time_cap=sm.number("time_cap", dsim.time_cap, positive=True),
        noise=sm.number("noise", dsim.noise, nonnegative=True),
        seed=sm.integer("seed", dsim.seed),
    )
    sm.finish()
    top.finish()

    sc = Scenario(bounds, start, tuple(goals), resolution, tuple(obstacles), robot, planner, sim, name)
    _check_start(sc)
    return sc


def _check_start(sc: Scenario) -> None:
    (x0, y0), (x1, y1) = sc.bounds
    s = sc.start
    if not (x0 < s.x < x1 and y0 < s.y < y1):
        raise ScenarioError("start lies outside the workspace", "start")
    if sc.obstacles and clearance((s.x, s.y), sc.obstacles) <= 0:
        raise ScenarioError("start lies inside an obstacle", "start")
    if not sc.grid().is_free_at((s.x, s.y)):
        raise ScenarioError(
            "start is too close to an obstacle or the border for the planner", "start"
        )


def scenario_to_dict(sc: Scenario) -> dict:
    p = sc.planner
    planner = {
        "mode": p.mode,
        "theta_max": p.theta_max,
        "segment_length": p.segment_length,
        "v_ref": p.v_ref,
        "goal_tolerance": p.goal_tolerance,
        "convention": p.convention,
        "replan_drift": p.replan_drift,
        "infeasible_tolerance": p.infeasible_tolerance,
        "pose_spacing": p.pose_spacing,
        "path_margin": p.path_margin,
    }
    if p.s_tolerance is not None:
        planner["s_tolerance"] = p.s_tolerance
    planner["limits"] = {
        "v_max": list(p.limits.v_max_body),
        "a_max": list(p.limits.a_max_body),
        "omega_max": p.limits.omega_max,
        "alpha_max": p.limits.alpha_max,
    }
    planner["weights"] = {f.name: getattr(p.weights, f.name) for f in fields(PenaltyWeights)}
    planner["solver"] = {f.name: getattr(p.solver, f.name) for f in fields(SolverConfig)}
    (x0, y0), (x1, y1) = sc.bounds
    out = {
        "name": sc.name,
        "workspace": {"min": [x0, y0], "max": [x1, y1], "resolution": sc.resolution},
        "robot": {"length": sc.robot.length, "width": sc.robot.width, "inflation": sc.robot.inflation},
        "start": {"x": sc.start.x, "y": sc.start.y, "theta": sc.start.theta},
        "goals": [{"position": list(g.position_goal), "target": list(g.orientation_target)} for g in sc.goals],
        "planner": planner,
        "sim": {f.name: getattr(sc.sim, f.name) for f in fields(SimConfig)},
    }
    if sc.obstacles:
        out["obstacles"] = [{"min": list(o.min_corner), "max": list(o.max_corner)} for o in sc.obstacles]
    return out


def dump_scenario(sc: Scenario) -> str:
    """Serialize to scenario text that :func:`parse_scenario` maps back to ``sc``."""
    return tomli_w.dumps(scenario_to_dict(sc))


def load_scenario(source: str | Path) -> Scenario:
    """Load a scenario from a path, or by packaged name (``sim_paper``, ``four_corners``)."""
    path = Path(source)
    if path.exists():
        return parse_scenario(path.read_text())
    name = path.name[:-4] if path.name.endswith(".scn") else path.name
    if name in PACKAGED:
        return parse_scenario(packaged_text(name))
    raise FileNotFoundError(f"no scenario file {source}")


def packaged_text(name: str) -> str:
    return resources.files("omniplan.scenarios").joinpath(f"{name}.scn").read_text()
