"""Angle conventions and the world/body frame transform.

Angles are kept in the half-open interval (-pi, pi]. Every heading residual in
the package goes through :func:`angle_diff` so nothing breaks across the wrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

TWO_PI = 2.0 * math.pi


class Vec2(NamedTuple):
    """Planar vector; meters, m/s or m/s^2 depending on context."""

    x: float
    y: float

    def norm(self) -> float:
        return math.hypot(self.x, self.y)


def normalize_angle(a):
    """Wrap an angle (scalar or array) into (-pi, pi]."""
    if np.ndim(a) == 0:
        a = float(a)
        r = math.fmod(a, TWO_PI)
        if r <= -math.pi:
            r += TWO_PI
        elif r > math.pi:
            r -= TWO_PI
        return r
    a = np.asarray(a, dtype=float)
    r = np.fmod(a, TWO_PI)
    r = np.where(r <= -math.pi, r + TWO_PI, r)
    return np.where(r > math.pi, r - TWO_PI, r)


def angle_diff(a, b):
    """Shortest signed difference ``a - b`` wrapped into (-pi, pi]."""
    if np.ndim(a) == 0 and np.ndim(b) == 0:
        return normalize_angle(float(a) - float(b))
    return normalize_angle(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))


@dataclass(frozen=True)
class Pose:
    """Robot configuration in the world frame.

    ``theta`` is the angle from the world x-axis to the body x'-axis and is
    normalized on construction.
    """

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.theta)):
            raise ValueError(f"non-finite pose ({self.x}, {self.y}, {self.theta})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> Vec2:
        return Vec2(self.x, self.y)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    def distance_to(self, other) -> float:
        if isinstance(other, Pose):
            other = (other.x, other.y)
        return math.hypot(other[0] - self.x, other[1] - self.y)


def rotation_matrix(theta: float) -> np.ndarray:
    """World-to-body transfer matrix ``Rot(theta)``."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, s], [-s, c]])


def rot_world_to_body(theta: float, v) -> Vec2:
    """Express a world-frame vector in the body frame of a robot at heading ``theta``."""
    c, s = math.cos(theta), math.sin(theta)
    x, y = float(v[0]), float(v[1])
    return Vec2(c * x + s * y, -s * x + c * y)


def rot_body_to_world(theta: float, v) -> Vec2:
    c, s = math.cos(theta), math.sin(theta)
    x, y = float(v[0]), float(v[1])
    return Vec2(c * x - s * y, s * x + c * y)


def required_orientations(points, target, convention: str = "bearing") -> np.ndarray:
    """Heading each point must hold to face ``target``.

    ``"bearing"`` is the full-quadrant direction from the point to the target.
    ``"literal"`` evaluates ``arctan((y - y_o) / (x - x_o))`` with the plain slope, which
    folds the result into (-pi/2, pi/2].
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    dx = target[0] - pts[:, 0]
    dy = target[1] - pts[:, 1]
    if convention == "bearing":
        return normalize_angle(np.arctan2(dy, dx))
    if convention == "literal":
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.arctan(dy / dx)
        return normalize_angle(np.where(dx == 0.0, math.pi / 2, out))
    raise ValueError(f"unknown orientation convention {convention!r}")
