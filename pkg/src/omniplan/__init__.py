"""Orientation-aware timed elastic band planning for omni-directional robots."""

from .band import Band, KinematicLimits, OrientationTask, PenaltyWeights, ProblemContext
from .geometry import Pose, Vec2, angle_diff, normalize_angle
from .gridmap import GoalUnreachableError, OccupancyGrid, PlanningError, RectObstacle, a_star, rasterize
from .optimizer import SolverConfig, SolverError, solve
from .planner import OrientationAwarePlanner, PlannerConfig, TaskGoal
from .report import RunSummary, compare, summarize, sweep
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .simulator import CollisionError, SimConfig, TimeCapExceeded, run

__version__ = "0.1.0"

__all__ = [
    "Band",
    "CollisionError",
    "GoalUnreachableError",
    "KinematicLimits",
    "OccupancyGrid",
    "OrientationAwarePlanner",
    "OrientationTask",
    "PenaltyWeights",
    "PlannerConfig",
    "PlanningError",
    "Pose",
    "ProblemContext",
    "RectObstacle",
    "RunSummary",
    "Scenario",
    "ScenarioError",
    "SimConfig",
    "SolverConfig",
    "SolverError",
    "TaskGoal",
    "TimeCapExceeded",
    "Vec2",
    "a_star",
    "angle_diff",
    "compare",
    "load_scenario",
    "normalize_angle",
    "parse_scenario",
    "rasterize",
    "run",
    "solve",
    "summarize",
    "sweep",
]
