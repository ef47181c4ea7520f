import math

import numpy as np
import pytest

from omniplan.band import KinematicLimits
from omniplan.geometry import Pose, Vec2
from omniplan.gridmap import GoalUnreachableError, RectObstacle
from omniplan.planner import Command, OrientationAwarePlanner, PlannerConfig, StepDiagnostics, TaskGoal
from omniplan.scenario import Scenario
from omniplan.simulator import (
    CollisionError,
    RobotState,
    SimConfig,
    TimeCapExceeded,
    footprint_clearance,
    integrate,
    run,
)


def test_integrate_examples():
    s = integrate(RobotState(Pose(0, 0, 0)), Command(Vec2(1, 0), 0.0), 0.1)
    assert (s.pose.x, s.pose.y, s.pose.theta) == pytest.approx((0.1, 0, 0))
    s = integrate(RobotState(Pose(0, 0, math.pi / 2)), Command(Vec2(1, 0), 0.0), 0.1)
    assert (s.pose.x, s.pose.y, s.pose.theta) == pytest.approx((0, 0.1, math.pi / 2), abs=1e-12)
    s = integrate(RobotState(Pose(0, 0, 0)), Command(Vec2(0, 0), math.pi), 0.1)
    assert s.pose.theta == pytest.approx(0.1 * math.pi)


def test_integrate_rate_limits():
    lim = KinematicLimits(Vec2(2, 2), Vec2(1, 1), 3, 2)
    s = integrate(RobotState(Pose(0, 0, 0)), Command(Vec2(2, -2), 3.0), 0.1, lim)
    assert s.v_body == pytest.approx((0.1, -0.1))
    assert s.omega == pytest.approx(0.2)
    assert s.time == pytest.approx(0.1)


def test_integrate_rejects_nonpositive_step():
    with pytest.raises(ValueError):
        integrate(RobotState(Pose(0, 0, 0)), Command.zero(), 0.0)


def rollout(h, T=2.0):
    """Fixed command schedule integrated with step ``h``."""
    state = RobotState(Pose(0, 0, 0))
    for i in range(int(round(T / h))):
        t = i * h
        cmd = Command(Vec2(1.0, 0.5 * math.sin(t)), 1.2)
        state = integrate(state, cmd, h)
    return np.array([state.pose.x, state.pose.y])


def test_halving_step_is_first_order():
    exact = rollout(1e-4)
    errs = [np.linalg.norm(rollout(h) - exact) for h in (0.02, 0.01, 0.005)]
    assert errs[0] > errs[1] > errs[2]
    for a, b in zip(errs, errs[1:]):
        assert 1.6 < a / b < 2.4


def test_footprint_clearance_examples():
    obs = [RectObstacle.from_bounds(1, -1, 2, 1)]
    assert footprint_clearance(Pose(0, 0, 0), 0.6, 0.45, obs) == pytest.approx(0.7)
    assert footprint_clearance(Pose(0, 0, math.pi / 2), 0.6, 0.45, obs) == pytest.approx(0.775)
    assert footprint_clearance(Pose(1.1, 0, 0), 0.6, 0.45, obs) == pytest.approx(-0.4)
    # corner to corner
    assert footprint_clearance(Pose(0, -1.525, 0), 0.6, 0.45, obs) == pytest.approx(math.hypot(0.7, 0.3))
    assert footprint_clearance(Pose(0, 0, 0), 0.6, 0.45, []) == math.inf


def open_scenario(goal, target, **planner):
    return Scenario(
        bounds=((0.0, 0.0), (6.0, 4.0)),
        start=Pose(1.5, 2.0, 0.0),
        goals=(TaskGoal(Vec2(*goal), Vec2(*target)),),
        planner=PlannerConfig(**planner),
        name="open",
    )


def test_empty_map_straight_goal():
    res = run(open_scenario((2.5, 2.0), (5.8, 2.0)))
    assert res.completed
    assert max(s.delta_theta for s in res.trace) < math.radians(2)
    end = res.trace[-1].pose
    assert math.hypot(end.x - 2.5, end.y - 2.0) <= 0.15


def test_trace_invariants():
    res = run(open_scenario((4.5, 2.5), (3.0, 0.5)))
    times = [s.time for s in res.trace]
    assert all(b > a for a, b in zip(times, times[1:]))
    lim = PlannerConfig().limits
    for s in res.trace:
        assert s.delta_theta >= 0
        assert s.clearance >= 0
        assert abs(s.command.v_body.x) <= lim.v_max_body.x
        assert abs(s.command.v_body.y) <= lim.v_max_body.y
        assert abs(s.command.omega) <= lim.omega_max
    assert res.min_footprint_clearance >= 0


def test_goal_inside_obstacle_fails_before_motion():
    sc = open_scenario((4.0, 2.0), (5.0, 3.0))
    sc = Scenario(sc.bounds, sc.start, sc.goals, obstacles=(RectObstacle.from_bounds(3.5, 1.5, 4.5, 2.5),))
    with pytest.raises(GoalUnreachableError):
        run(sc)


def test_time_cap():
    sc = open_scenario((5.0, 2.0), (5.5, 3.5))
    with pytest.raises(TimeCapExceeded):
        run(sc, sim=SimConfig(time_cap=0.5))


def test_collision_is_reported(monkeypatch):
    sc = open_scenario((4.5, 2.0), (5.5, 3.5))
    sc = Scenario(sc.bounds, sc.start, sc.goals, obstacles=(RectObstacle.from_bounds(2.2, 1.0, 2.6, 3.0),))

    def ram(self, state, velocity=None):
        return Command(Vec2(1.0, 0.0), 0.0), StepDiagnostics(goal_index=0)

    monkeypatch.setattr(OrientationAwarePlanner, "step", ram)
    with pytest.raises(CollisionError) as info:
        run(sc)
    assert info.value.pose.x < 2.2
    assert 0 < info.value.time < 1.0


def test_noisy_runs_are_reproducible():
    sc = open_scenario((3.5, 2.5), (5.0, 3.5))
    sim = SimConfig(noise=0.01, seed=3)
    a, b = run(sc, sim=sim), run(sc, sim=sim)
    assert [(s.time, s.pose) for s in a.trace] == [(s.time, s.pose) for s in b.trace]


@pytest.mark.parametrize("kw", [{"control_period": 0}, {"physics_step": 0.2}, {"time_cap": 0}, {"noise": -1}])
def test_sim_config_validation(kw):
    with pytest.raises(ValueError):
        SimConfig(**kw)
