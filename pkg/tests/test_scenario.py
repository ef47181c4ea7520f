import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omniplan.planner import PlannerConfig
from omniplan.scenario import (
    PACKAGED,
    ScenarioError,
    dump_scenario,
    load_scenario,
    packaged_text,
    parse_scenario,
)
from omniplan.simulator import SimConfig

MINIMAL = """
[workspace]
min = [0.0, 0.0]
max = [6.0, 4.0]

[start]
x = 1.5
y = 1.5

[[goals]]
position = [4.0, 3.0]
target = [5.0, 1.0]
"""


def test_sim_paper_contents():
    sc = load_scenario("sim_paper")
    assert sc.bounds == ((0.0, 0.0), (8.0, 5.0))
    w = sc.planner.weights
    assert (w.sigma_v, w.sigma_a, w.sigma_omega, w.sigma_alpha, w.sigma_o, w.sigma_theta) == (1, 3, 1, 3, 50, 1)
    assert sc.planner.theta_max == pytest.approx(math.radians(15))
    assert sc.robot.r_roi == pytest.approx(0.375 + 0.4)


def test_four_corners_contents():
    sc = load_scenario("four_corners")
    assert len(sc.goals) == 4
    (x0, y0), (x1, y1) = sc.bounds
    center = ((x0 + x1) / 2, (y0 + y1) / 2)
    assert all(g.orientation_target == pytest.approx(center) for g in sc.goals)


def test_minimal_file_takes_defaults():
    sc = parse_scenario(MINIMAL)
    assert sc.planner == PlannerConfig()
    assert sc.sim == SimConfig()
    assert sc.resolution == 0.05
    assert sc.obstacles == ()
    assert sc.start.theta == 0.0


def test_negative_resolution_names_field():
    text = MINIMAL.replace("max = [6.0, 4.0]", "max = [6.0, 4.0]\nresolution = -0.1")
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert info.value.field == "workspace.resolution"
    assert "workspace.resolution" in str(info.value)


def test_syntax_error_has_line():
    text = MINIMAL.replace("x = 1.5", "x = = 1.5")
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert info.value.line == text.splitlines().index("x = = 1.5") + 1


def test_unknown_key_rejected():
    with pytest.raises(ScenarioError) as info:
        parse_scenario(MINIMAL + "\n[planner]\nsegment_lenght = 2.0\n")
    assert "segment_lenght" in str(info.value)


def test_start_in_obstacle_rejected():
    text = MINIMAL + "\n[[obstacles]]\nmin = [1.0, 1.0]\nmax = [2.0, 2.0]\n"
    with pytest.raises(ScenarioError) as info:
        parse_scenario(text)
    assert info.value.field == "start"


def test_missing_goals_rejected():
    with pytest.raises(ScenarioError):
        parse_scenario(MINIMAL.split("[[goals]]")[0])


def test_degrees_converted():
    sc = parse_scenario(MINIMAL.replace("y = 1.5", "y = 1.5\ntheta_deg = 90.0"))
    assert sc.start.theta == pytest.approx(math.pi / 2)


def test_missing_file():
    with pytest.raises(FileNotFoundError):
        load_scenario("/nonexistent/dir/x.scn")


@pytest.mark.parametrize("name", PACKAGED)
def test_packaged_round_trip(name):
    sc = parse_scenario(packaged_text(name))
    assert parse_scenario(dump_scenario(sc)) == sc


@settings(max_examples=25, deadline=None)
@given(
    st.floats(0.01, 0.5),
    st.sampled_from(["oateb", "teb"]),
    st.floats(0.1, 3.0),
    st.floats(0.5, 6.0),
    st.integers(0, 2**31),
    st.floats(0.0, 0.05),
)
def test_round_trip_property(theta_max, mode, v_ref, seg, seed, noise):
    text = MINIMAL + (
        f"\n[planner]\nmode = \"{mode}\"\ntheta_max = {theta_max!r}\nv_ref = {v_ref!r}\n"
        f"segment_length = {seg!r}\n\n[sim]\nseed = {seed}\nnoise = {noise!r}\n"
    )
    sc = parse_scenario(text)
    again = parse_scenario(dump_scenario(sc))
    assert again == sc
    assert dump_scenario(again) == dump_scenario(sc)
