"""Grid Dijkstra and fixed-cardinality waypoints on the local costmap."""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .costmap import INSCRIBED, LocalCostmap, OccupancyGrid
from .geometry import Pose

_NEIGHBOURS = (
    (-1, -1, math.sqrt(2.0)),
    (-1, 0, 1.0),
    (-1, 1, math.sqrt(2.0)),
    (0, -1, 1.0),
    (0, 1, 1.0),
    (1, -1, math.sqrt(2.0)),
    (1, 0, 1.0),
    (1, 1, math.sqrt(2.0)),
)


class NoPathExists(RuntimeError):
    pass


class StartOrGoalOccupied(ValueError):
    pass


class PlanOutsideWindow(RuntimeError):
    pass


@dataclass(frozen=True)
class GlobalPlan:
    cells: tuple[tuple[int, int], ...]
    world_points: np.ndarray
    cost: float

    @property
    def arc_length(self) -> np.ndarray:
        seg = np.hypot(*np.diff(self.world_points, axis=0).T)
        return np.concatenate(([0.0], np.cumsum(seg)))


@dataclass
class WaypointSet:
    points: np.ndarray  # (n, 2)
    headings: np.ndarray  # (n,)
    on_obstacle: np.ndarray  # (n,) bool

    def __len__(self) -> int:
        return len(self.points)

    def pose(self, i: int) -> Pose:
        return Pose(self.points[i, 0], self.points[i, 1], self.headings[i])

    def triples(self) -> list[list]:
        return [[float(x), float(y), bool(f)] for (x, y), f in zip(self.points, self.on_obstacle)]


def step_cost(length: float, cell_cost: int) -> float:
    return length * (1.0 + cell_cost / 255.0)


def plan_dijkstra(grid: OccupancyGrid, start: tuple[int, int], goal: tuple[int, int]) -> GlobalPlan:
    """Cheapest 8-connected path; cells at or above the inscribed cost are walls.

    Moving into a cell costs the metric step length scaled by
    ``1 + cost/255`` of the destination cell. Ties pop in (g, row-major index)
    order so the result is deterministic.
    """
    h, w = grid.cells.shape
    cells = grid.cells
    res = grid.resolution
    for name, (r, c) in (("start", start), ("goal", goal)):
        if not (0 <= r < h and 0 <= c < w):
            raise StartOrGoalOccupied(f"{name} {(r, c)} outside grid")
        if cells[r, c] >= INSCRIBED:
            raise StartOrGoalOccupied(f"{name} {(r, c)} is occupied (cost {cells[r, c]})")
    blocked = (cells >= INSCRIBED).ravel().tolist()
    factor = (1.0 + cells.astype(float) / 255.0).ravel().tolist()
    n = h * w
    dist = [math.inf] * n
    parent = [-1] * n
    s = start[0] * w + start[1]
    g_idx = goal[0] * w + goal[1]
    dist[s] = 0.0
    heap = [(0.0, s)]
    done = [False] * n
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        done[u] = True
        if u == g_idx:
            break
        ur, uc = divmod(u, w)
        for dr, dc, L in _NEIGHBOURS:
            vr, vc = ur + dr, uc + dc
            if vr < 0 or vr >= h or vc < 0 or vc >= w:
                continue
            v = vr * w + vc
            if blocked[v] or done[v]:
                continue
            nd = d + L * res * factor[v]
            if nd < dist[v]:
                dist[v] = nd
                parent[v] = u
                heapq.heappush(heap, (nd, v))
    if not done[g_idx]:
        raise NoPathExists(f"no path from {start} to {goal}")
    path = [g_idx]
    while path[-1] != s:
        path.append(parent[path[-1]])
    path.reverse()
    rc = tuple(divmod(i, w) for i in path)
    rows = np.array([r for r, _ in rc])
    cols = np.array([c for _, c in rc])
    xs, ys = grid.cell_center(rows, cols)
    return GlobalPlan(rc, np.stack([xs, ys], axis=1).astype(float), dist[g_idx])


def path_cost(grid: OccupancyGrid, cells) -> float:
    total = 0.0
    for (r0, c0), (r1, c1) in zip(cells, cells[1:]):
        total += step_cost(math.hypot(r1 - r0, c1 - c0) * grid.resolution, int(grid.cells[r1, c1]))
    return total


def _polyline_point(points: np.ndarray, cum: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Points and segment headings at arc lengths ``s`` along a polyline."""
    if len(points) == 1:
        return np.repeat(points, len(s), axis=0), np.zeros(len(s))
    idx = np.clip(np.searchsorted(cum, s, side="right") - 1, 0, len(points) - 2)
    seg = cum[idx + 1] - cum[idx]
    a = np.where(seg > 0, (s - cum[idx]) / np.where(seg > 0, seg, 1.0), 0.0)
    p = points[idx] + a[:, None] * (points[idx + 1] - points[idx])
    d = points[idx + 1] - points[idx]
    return p, np.arctan2(d[:, 1], d[:, 0])


def downsample_waypoints(
    plan: GlobalPlan,
    local: LocalCostmap,
    n: int = 8,
    start_index: int = 0,
    nearest_index: int | None = None,
) -> WaypointSet:
    """``n`` equally arc-length-spaced points on the plan inside the window.

    The stretch runs from the plan point nearest the robot (searching from
    ``start_index`` on, or ``nearest_index`` when a tracker already knows it)
    to where the plan first leaves the window, or to its end.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    pts = plan.world_points[start_index:]
    half = (local.half_cells + 0.5) * local.resolution
    inside = (np.abs(pts[:, 0] - local.center.x) <= half) & (np.abs(pts[:, 1] - local.center.y) <= half)
    if not inside.any():
        raise PlanOutsideWindow("no plan point inside the local window")
    if nearest_index is not None and inside[nearest_index - start_index]:
        i0 = nearest_index - start_index
    else:
        d = np.hypot(pts[:, 0] - local.center.x, pts[:, 1] - local.center.y)
        d = np.where(inside, d, np.inf)
        i0 = int(np.argmin(d))
    i1 = i0
    while i1 + 1 < len(pts) and inside[i1 + 1]:
        i1 += 1
    seg = pts[i0 : i1 + 1]
    cum = np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(seg, axis=0).T)))) if len(seg) > 1 else np.zeros(1)
    s = np.linspace(0.0, cum[-1], n)
    points, headings = _polyline_point(seg, cum, s)
    flags = local.lookup(points[:, 0], points[:, 1]) >= INSCRIBED
    return WaypointSet(points, headings, flags)


def select_goal_waypoint(wps: WaypointSet) -> tuple[Pose, bool]:
    """First waypoint not on an obstacle; (last waypoint, True) if all are."""
    if len(wps) == 0:
        raise ValueError("empty waypoint set")
    free = np.flatnonzero(~wps.on_obstacle)
    if free.size:
        return wps.pose(int(free[0])), False
    return wps.pose(len(wps) - 1), True


@dataclass
class PlanTracker:
    """Monotone progress along a fixed plan.

    The nearest-point search only looks ``horizon`` metres ahead of the
    current progress index so a plan that doubles back past a thin wall
    cannot pull progress onto its far leg.
    """

    plan: GlobalPlan
    horizon: float = 1.5
    index: int = 0
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._cum = self.plan.arc_length

    def update(self, pose: Pose) -> int:
        pts = self.plan.world_points
        stop = int(np.searchsorted(self._cum, self._cum[self.index] + self.horizon, side="right"))
        window = pts[self.index : max(stop, self.index + 1)]
        d = np.hypot(window[:, 0] - pose.x, window[:, 1] - pose.y)
        self.index += int(np.argmin(d))
        return self.index
