import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from omniplan.geometry import (
    Pose,
    Vec2,
    angle_diff,
    normalize_angle,
    required_orientations,
    rot_body_to_world,
    rot_world_to_body,
)

angles = st.floats(-50.0, 50.0, allow_nan=False)
coords = st.floats(-100.0, 100.0, allow_nan=False)


@pytest.mark.parametrize(
    "theta, v, expected",
    [
        (0.0, (1.2, -0.3), (1.2, -0.3)),
        (math.pi / 2, (1.0, 0.0), (0.0, -1.0)),
        (math.pi / 4, (1.0, 1.0), (math.sqrt(2), 0.0)),
    ],
)
def test_rot_world_to_body_examples(theta, v, expected):
    out = rot_world_to_body(theta, v)
    assert out == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("a, expected", [(0.0, 0.0), (3 * math.pi, math.pi), (-math.pi, math.pi)])
def test_normalize_angle_examples(a, expected):
    assert normalize_angle(a) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize(
    "a, b, expected",
    [(math.pi / 4, math.pi / 4, 0.0), (-3.0, 3.0, 2 * math.pi - 6.0), (0.0, math.pi / 2, -math.pi / 2)],
)
def test_angle_diff_examples(a, b, expected):
    assert angle_diff(a, b) == pytest.approx(expected, abs=1e-12)


def test_angle_diff_wrap_value():
    assert angle_diff(-3.0, 3.0) == pytest.approx(0.2832, abs=1e-4)


def test_rotation_norm_dense_sample():
    v = np.array([0.7, -2.3])
    for th in np.linspace(-4 * math.pi, 4 * math.pi, 10001):
        assert abs(rot_world_to_body(th, v).norm() - np.hypot(*v)) < 1e-12


@given(angles, coords, coords)
def test_rotation_preserves_norm(theta, x, y):
    assert rot_world_to_body(theta, (x, y)).norm() == pytest.approx(math.hypot(x, y), abs=1e-12 * max(1, abs(x) + abs(y)))


@given(angles, coords, coords)
def test_rotation_inverse(theta, x, y):
    back = rot_world_to_body(-theta, rot_world_to_body(theta, (x, y)))
    assert back.x == pytest.approx(x, abs=1e-12 * max(1, abs(x) + abs(y)))
    assert back.y == pytest.approx(y, abs=1e-12 * max(1, abs(x) + abs(y)))
    again = rot_body_to_world(theta, rot_world_to_body(theta, (x, y)))
    assert again.x == pytest.approx(x, abs=1e-11 * max(1, abs(x) + abs(y)))


@given(angles)
def test_normalize_range_and_idempotent(a):
    n = normalize_angle(a)
    assert -math.pi < n <= math.pi
    assert normalize_angle(n) == n
    # congruent modulo 2 pi
    k = (a - n) / (2 * math.pi)
    assert abs(k - round(k)) < 1e-9


@given(angles, angles)
def test_angle_diff_antisymmetric(a, b):
    d, e = angle_diff(a, b), angle_diff(b, a)
    if abs(abs(d) - math.pi) > 1e-9:
        assert d == pytest.approx(-e, abs=1e-9)


def test_normalize_angle_vectorized():
    out = normalize_angle(np.array([0.0, 3 * math.pi, -math.pi]))
    np.testing.assert_allclose(out, [0.0, math.pi, math.pi], atol=1e-12)


def test_pose_normalizes_heading():
    p = Pose(1.0, 2.0, -math.pi)
    assert p.theta == pytest.approx(math.pi)


@pytest.mark.parametrize("bad", [(math.nan, 0.0, 0.0), (0.0, math.inf, 0.0)])
def test_pose_rejects_nonfinite(bad):
    with pytest.raises(ValueError):
        Pose(*bad)


def test_vec2_norm():
    assert Vec2(3.0, 4.0).norm() == 5.0


def test_required_orientations_conventions():
    pts = np.array([[0.0, 0.0], [2.0, 2.0]])
    bearing = required_orientations(pts, (1.0, 1.0))
    np.testing.assert_allclose(bearing, [math.pi / 4, -3 * math.pi / 4])
    literal = required_orientations(pts, (1.0, 1.0), "literal")
    # the slope form cannot tell the two sides apart
    np.testing.assert_allclose(literal, [math.pi / 4, math.pi / 4])
