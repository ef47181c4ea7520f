"""Workspace rasterization, A* search and exact rectangle clearance."""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Vec2

SQRT2 = math.sqrt(2.0)

# 8-connected moves as (dx, dy, cost in cells)
_MOVES = [
    (1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
    (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2),
]


class PlanningError(Exception):
    """Base class for path search failures."""


class StartOccupiedError(PlanningError):
    pass


class GoalUnreachableError(PlanningError):
    pass


@dataclass(frozen=True)
class RectObstacle:
    """Axis-aligned rectangle given by its min and max corners (meters)."""

    min_corner: Vec2
    max_corner: Vec2

    def __post_init__(self):
        lo, hi = Vec2(*map(float, self.min_corner)), Vec2(*map(float, self.max_corner))
        if not (lo.x < hi.x and lo.y < hi.y):
            raise ValueError(f"degenerate rectangle {lo} .. {hi}")
        object.__setattr__(self, "min_corner", lo)
        object.__setattr__(self, "max_corner", hi)

    @classmethod
    def from_bounds(cls, x0, y0, x1, y1) -> "RectObstacle":
        return cls(Vec2(x0, y0), Vec2(x1, y1))

    def as_array(self) -> np.ndarray:
        return np.array([*self.min_corner, *self.max_corner])


def workspace_walls(bounds, thickness: float = 1.0) -> list[RectObstacle]:
    """Four rectangles just outside ``bounds`` that stand in for the border."""
    (x0, y0), (x1, y1) = bounds
    t = thickness
    return [
        RectObstacle.from_bounds(x0 - t, y0 - t, x1 + t, y0),
        RectObstacle.from_bounds(x0 - t, y1, x1 + t, y1 + t),
        RectObstacle.from_bounds(x0 - t, y0, x0, y1),
        RectObstacle.from_bounds(x1, y0, x1 + t, y1),
    ]


def obstacle_array(obstacles: Sequence[RectObstacle] | np.ndarray) -> np.ndarray:
    if isinstance(obstacles, np.ndarray):
        return obstacles.reshape(-1, 4)
    if not obstacles:
        return np.zeros((0, 4))
    return np.array([o.as_array() for o in obstacles])


def signed_distances(points: np.ndarray, rects: np.ndarray) -> np.ndarray:
    """Signed point-to-rectangle distances, shape ``(n_points, n_rects)``.

    Negative inside a rectangle (depth to the nearest face).
    """
    points = np.atleast_2d(points)
    center = 0.5 * (rects[:, :2] + rects[:, 2:])
    half = 0.5 * (rects[:, 2:] - rects[:, :2])
    q = np.abs(points[:, None, :] - center[None]) - half[None]
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(q.max(axis=-1), 0.0)
    return outside + inside


def clearance_and_gradient(points: np.ndarray, rects: np.ndarray):
    """Minimum signed clearance per point and its gradient w.r.t. the point.

    Returns ``(d, grad)`` with ``d`` shape ``(n,)`` and ``grad`` shape ``(n, 2)``.
    With no rectangles ``d`` is ``+inf`` and the gradient is zero.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    n = len(points)
    if len(rects) == 0:
        return np.full(n, np.inf), np.zeros((n, 2))
    center = 0.5 * (rects[:, :2] + rects[:, 2:])
    half = 0.5 * (rects[:, 2:] - rects[:, :2])
    rel = points[:, None, :] - center[None]
    q = np.abs(rel) - half[None]
    qpos = np.maximum(q, 0.0)
    out_norm = np.linalg.norm(qpos, axis=-1)
    d_all = out_norm + np.minimum(q.max(axis=-1), 0.0)
    j = np.argmin(d_all, axis=1)
    rows = np.arange(n)
    d = d_all[rows, j]
    qj, qposj, relj, onj = q[rows, j], qpos[rows, j], rel[rows, j], out_norm[rows, j]
    sgn = np.where(relj >= 0.0, 1.0, -1.0)
    grad = np.zeros((n, 2))
    out = onj > 0.0
    grad[out] = qposj[out] / onj[out, None] * sgn[out]
    ins = ~out
    if ins.any():
        axis = np.argmax(qj[ins], axis=1)
        g = np.zeros((ins.sum(), 2))
        g[np.arange(len(axis)), axis] = sgn[ins][np.arange(len(axis)), axis]
        grad[ins] = g
    return d, grad


def clearance(p, obstacles: Sequence[RectObstacle] | np.ndarray) -> float:
    """Exact minimum distance from ``p`` to any obstacle, negative when inside one."""
    rects = obstacle_array(obstacles)
    if len(rects) == 0:
        return math.inf
    return float(signed_distances(np.asarray(p, dtype=float)[None], rects).min())


@dataclass(frozen=True)
class GridPath:
    """Ordered world positions from the start cell to the reached goal cell."""

    points: list[Vec2]
    cost: float = 0.0
    cells: list[tuple[int, int]] = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Rasterized workspace. ``cells[iy, ix]`` is True when occupied."""

    origin: Vec2
    resolution: float
    cells: np.ndarray

    def __post_init__(self):
        if not self.resolution > 0:
            raise ValueError("resolution must be positive")
        self.cells.setflags(write=False)

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    def cell_of(self, p) -> tuple[int, int]:
        """``(ix, iy)`` of the cell containing ``p``; may lie outside the grid."""
        return (
            int(math.floor((p[0] - self.origin.x) / self.resolution)),
            int(math.floor((p[1] - self.origin.y) / self.resolution)),
        )

    def center_of(self, cell) -> Vec2:
        ix, iy = cell
        return Vec2(
            self.origin.x + (ix + 0.5) * self.resolution,
            self.origin.y + (iy + 0.5) * self.resolution,
        )

    def in_bounds(self, cell) -> bool:
        ix, iy = cell
        return 0 <= ix < self.width and 0 <= iy < self.height

    def is_free(self, cell) -> bool:
        return self.in_bounds(cell) and not self.cells[cell[1], cell[0]]

    def is_free_at(self, p) -> bool:
        return self.is_free(self.cell_of(p))

    def neighbors(self, cell):
        """Free 8-neighbors with step cost in cells; diagonals may not cut corners."""
        ix, iy = cell
        for dx, dy, cost in _MOVES:
            nxt = (ix + dx, iy + dy)
            if not self.is_free(nxt):
                continue
            if dx and dy and not (self.is_free((ix + dx, iy)) and self.is_free((ix, iy + dy))):
                continue
            yield nxt, cost

    def nearest_free(self, p, max_radius: float = 2.0) -> tuple[int, int] | None:
        """Free cell whose center is closest to ``p`` within ``max_radius``."""
        free_iy, free_ix = np.nonzero(~self.cells)
        if len(free_ix) == 0:
            return None
        cx = self.origin.x + (free_ix + 0.5) * self.resolution
        cy = self.origin.y + (free_iy + 0.5) * self.resolution
        d2 = (cx - p[0]) ** 2 + (cy - p[1]) ** 2
        k = int(np.argmin(d2))
        if d2[k] > max_radius**2:
            return None
        return int(free_ix[k]), int(free_iy[k])


def rasterize(bounds, resolution: float, obstacles: Sequence[RectObstacle], inflation: float) -> OccupancyGrid:
    """Build an occupancy grid over ``bounds = ((x0, y0), (x1, y1))``.

    A cell is occupied when its center is within ``inflation`` of an obstacle
    or of the workspace border.
    """
    if not resolution > 0:
        raise ValueError("resolution must be positive")
    if inflation < 0:
        raise ValueError("inflation must be nonnegative")
    (x0, y0), (x1, y1) = bounds
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"degenerate bounds {bounds}")
    width = int(round((x1 - x0) / resolution))
    height = int(round((y1 - y0) / resolution))
    if width < 1 or height < 1:
        raise ValueError("bounds smaller than one cell")
    xs = x0 + (np.arange(width) + 0.5) * resolution
    ys = y0 + (np.arange(height) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys)
    border = np.minimum.reduce([gx - x0, x1 - gx, gy - y0, y1 - gy])
    occupied = border <= inflation
    rects = obstacle_array(obstacles)
    if len(rects):
        pts = np.column_stack([gx.ravel(), gy.ravel()])
        d = signed_distances(pts, rects).min(axis=1).reshape(gx.shape)
        occupied |= d <= inflation
    return OccupancyGrid(Vec2(x0, y0), float(resolution), occupied)


def _octile(a, b) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def a_star(grid: OccupancyGrid, start, goal, s_tolerance: float | None = None) -> GridPath:
    """Minimum-cost 8-connected path from the cell of ``start`` to a free cell
    whose center is within ``s_tolerance`` of ``goal``.

    ``s_tolerance`` defaults to two cells. Ties on f are broken by the lower
    heuristic, then by insertion order.
    """
    res = grid.resolution
    tol = 2.0 * res if s_tolerance is None else float(s_tolerance)
    start_cell = grid.cell_of(start)
    if not grid.is_free(start_cell):
        raise StartOccupiedError(f"start {tuple(start)} lies in an occupied cell")

    goal_cell = grid.cell_of(goal)
    gx = (goal[0] - grid.origin.x) / res - 0.5
    gy = (goal[1] - grid.origin.y) / res - 0.5
    tol_cells = tol / res

    def is_goal(cell) -> bool:
        if cell == goal_cell:
            return True
        return math.hypot(cell[0] - gx, cell[1] - gy) <= tol_cells + 1e-9

    if tol_cells <= 0:
        def h(cell) -> float:
            return _octile(cell, goal_cell)
    else:
        # the goal cell itself may sit up to half a diagonal from the goal point
        slack = max(tol_cells, 0.5 * SQRT2)

        def h(cell) -> float:
            return max(0.0, math.hypot(cell[0] - gx, cell[1] - gy) - slack)

    counter = itertools.count()
    g_cost = {start_cell: 0.0}
    parent: dict = {start_cell: None}
    h0 = h(start_cell)
    heap = [(h0, h0, next(counter), start_cell)]
    closed = set()
    while heap:
        _, _, _, cell = heapq.heappop(heap)
        if cell in closed:
            continue
        if is_goal(cell):
            cells = []
            c = cell
            while c is not None:
                cells.append(c)
                c = parent[c]
            cells.reverse()
            return GridPath([grid.center_of(c) for c in cells], g_cost[cell] * res, cells)
        closed.add(cell)
        g = g_cost[cell]
        for nxt, step in grid.neighbors(cell):
            if nxt in closed:
                continue
            ng = g + step
            if ng < g_cost.get(nxt, math.inf) - 1e-12:
                g_cost[nxt] = ng
                parent[nxt] = cell
                hn = h(nxt)
                heapq.heappush(heap, (ng + hn, hn, next(counter), nxt))
    raise GoalUnreachableError(f"no free cell within {tol} m of goal {tuple(goal)} is reachable")
