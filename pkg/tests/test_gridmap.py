import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from omniplan.geometry import Vec2
from omniplan.gridmap import (
    GoalUnreachableError,
    OccupancyGrid,
    RectObstacle,
    StartOccupiedError,
    a_star,
    clearance,
    clearance_and_gradient,
    obstacle_array,
    rasterize,
)
from oracles import dijkstra_cost


def unit_grid(occupied):
    return OccupancyGrid(Vec2(0.0, 0.0), 1.0, np.array(occupied, dtype=bool))


def center(cell):
    return (cell[0] + 0.5, cell[1] + 0.5)


def test_rect_obstacle_requires_ordered_corners():
    with pytest.raises(ValueError):
        RectObstacle(Vec2(1, 0), Vec2(0, 1))
    with pytest.raises(ValueError):
        RectObstacle(Vec2(0, 0), Vec2(1, 0))


def test_rasterize_empty_map_all_free():
    g = rasterize(((0, 0), (2, 1)), 0.1, [], 0.0)
    assert not g.cells.any()
    assert (g.width, g.height) == (20, 10)


def test_rasterize_one_obstacle():
    obs = [RectObstacle(Vec2(2, 1), Vec2(3, 2))]
    g = rasterize(((0, 0), (8, 5)), 0.05, obs, 0.4)
    assert not g.is_free_at((2.5, 1.5))
    assert g.is_free_at((0.5, 0.5))


def test_rasterize_sim_dimensions():
    g = rasterize(((0, 0), (8, 5)), 0.05, [], 0.4)
    assert (g.width, g.height) == (160, 100)
    assert g.cells.size == 160 * 100


def test_rasterize_border_inflation():
    g = rasterize(((0, 0), (4, 4)), 0.1, [], 0.3)
    assert not g.is_free_at((0.25, 2.0))
    assert g.is_free_at((0.35, 2.0))


@pytest.mark.parametrize("res, bounds", [(0.0, ((0, 0), (1, 1))), (-0.1, ((0, 0), (1, 1))), (0.1, ((0, 0), (0, 1)))])
def test_rasterize_rejects_bad_input(res, bounds):
    with pytest.raises(ValueError):
        rasterize(bounds, res, [], 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(0.0, 1.0))
def test_shrinking_inflation_never_occupies(a, b):
    lo, hi = sorted((a, b))
    obs = [RectObstacle(Vec2(1.0, 1.0), Vec2(1.6, 2.2)), RectObstacle(Vec2(3.0, 0.2), Vec2(3.4, 0.9))]
    small = rasterize(((0, 0), (4, 3)), 0.1, obs, lo)
    big = rasterize(((0, 0), (4, 3)), 0.1, obs, hi)
    assert not np.any(small.cells & ~big.cells)


def test_a_star_diagonal_cost():
    g = unit_grid(np.zeros((5, 5)))
    path = a_star(g, center((0, 0)), center((4, 4)), s_tolerance=0.0)
    assert path.cost == pytest.approx(4 * math.sqrt(2))
    assert path.cost == pytest.approx(dijkstra_cost(g.cells, (0, 0), (4, 4)))


def test_a_star_start_equals_goal():
    g = unit_grid(np.zeros((3, 3)))
    path = a_star(g, center((1, 1)), center((1, 1)), s_tolerance=0.0)
    assert len(path) == 1
    assert path.cost == 0.0


def test_a_star_walled_goal_unreachable():
    occ = np.zeros((5, 5), dtype=bool)
    occ[1:4, 1:4] = True
    occ[2, 2] = False
    g = unit_grid(occ)
    assert math.isinf(dijkstra_cost(occ, (0, 0), (2, 2)))
    with pytest.raises(GoalUnreachableError):
        a_star(g, center((0, 0)), center((2, 2)), s_tolerance=0.0)


def test_a_star_start_occupied():
    occ = np.zeros((3, 3), dtype=bool)
    occ[0, 0] = True
    with pytest.raises(StartOccupiedError):
        a_star(unit_grid(occ), center((0, 0)), center((2, 2)))


def test_a_star_errors_are_distinct():
    assert not issubclass(StartOccupiedError, GoalUnreachableError)
    assert not issubclass(GoalUnreachableError, StartOccupiedError)


def test_a_star_tolerance_stops_near_goal():
    g = rasterize(((0, 0), (4, 4)), 0.1, [], 0.0)
    goal = (3.0, 3.0)
    path = a_star(g, (0.55, 0.55), goal, s_tolerance=0.3)
    end = path[-1]
    assert math.hypot(end.x - goal[0], end.y - goal[1]) <= 0.3 + 1e-9
    assert len(path) < len(a_star(g, (0.55, 0.55), goal, s_tolerance=0.0))


def test_a_star_default_tolerance_is_two_cells():
    g = rasterize(((0, 0), (4, 4)), 0.1, [], 0.0)
    end = a_star(g, (0.55, 0.55), (3.0, 3.0))[-1]
    assert math.hypot(end.x - 3.0, end.y - 3.0) <= 0.2 + 1e-9


def random_instance(rng, size=20, density=0.2):
    occ = rng.random((size, size)) < density
    free = np.argwhere(~occ)
    i, j = rng.choice(len(free), 2, replace=False)
    s = (int(free[i][1]), int(free[i][0]))
    t = (int(free[j][1]), int(free[j][0]))
    return occ, s, t


def test_a_star_matches_dijkstra_on_random_grids():
    rng = np.random.default_rng(20240)
    checked = 0
    for _ in range(50):
        occ, s, t = random_instance(rng)
        g = unit_grid(occ)
        ref = dijkstra_cost(occ, s, t)
        if math.isinf(ref):
            with pytest.raises(GoalUnreachableError):
                a_star(g, center(s), center(t), s_tolerance=0.0)
            continue
        path = a_star(g, center(s), center(t), s_tolerance=0.0)
        assert path.cost == pytest.approx(ref, abs=1e-9)
        checked += 1
    assert checked >= 25


def test_a_star_paths_are_free_and_connected():
    rng = np.random.default_rng(7)
    for _ in range(20):
        occ, s, t = random_instance(rng)
        g = unit_grid(occ)
        try:
            path = a_star(g, center(s), center(t), s_tolerance=0.0)
        except GoalUnreachableError:
            continue
        for c in path.cells:
            assert g.is_free(c)
        for a, b in zip(path.cells, path.cells[1:]):
            assert max(abs(a[0] - b[0]), abs(a[1] - b[1])) == 1


def test_a_star_deterministic():
    rng = np.random.default_rng(3)
    occ, s, t = random_instance(rng, density=0.1)
    g = unit_grid(occ)
    assert a_star(g, center(s), center(t)).cells == a_star(g, center(s), center(t)).cells


@pytest.mark.parametrize(
    "p, rect, expected",
    [((0, 0), (2, -1, 3, 1), 2.0), ((2.5, 0), (2, -1, 3, 1), -0.5), ((4, 5), (0, 0, 1, 1), 5.0)],
)
def test_clearance_examples(p, rect, expected):
    obs = [RectObstacle.from_bounds(*rect)]
    assert clearance(p, obs) == pytest.approx(expected)


def test_clearance_no_obstacles_is_infinite():
    assert clearance((1.0, 1.0), []) == math.inf


def test_clearance_takes_minimum():
    obs = [RectObstacle.from_bounds(2, 0, 3, 1), RectObstacle.from_bounds(-2, 0, -1.5, 1)]
    assert clearance((0, 0.5), obs) == pytest.approx(1.5)


points = st.tuples(st.floats(-3, 6), st.floats(-3, 6))
OBS = [RectObstacle.from_bounds(0, 0, 1, 2), RectObstacle.from_bounds(2.5, -1, 4, 0.5)]


@given(points, points)
def test_clearance_is_lipschitz(p, q):
    assert abs(clearance(p, OBS) - clearance(q, OBS)) <= math.dist(p, q) + 1e-12


@given(points)
def test_clearance_gradient_matches_differences(p):
    rects = obstacle_array(OBS)
    d, g = clearance_and_gradient(np.array([p]), rects)
    h = 1e-7
    fd = [
        (clearance((p[0] + h, p[1]), OBS) - clearance((p[0] - h, p[1]), OBS)) / (2 * h),
        (clearance((p[0], p[1] + h), OBS) - clearance((p[0], p[1] - h), OBS)) / (2 * h),
    ]
    # skip the kinks (medial axis, faces) where the gradient jumps
    if abs(np.hypot(*fd) - 1) < 1e-5:
        np.testing.assert_allclose(g[0], fd, atol=1e-5)
    assert d[0] == pytest.approx(clearance(p, OBS))
