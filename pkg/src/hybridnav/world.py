"""Deterministic 2-D world: unicycle robot, scripted disc obstacles, a
range-limited ray-cast sensor and ground-truth collision checks."""

from __future__ import annotations

import logging
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .costmap import LETHAL, OccupancyGrid
from .geometry import Pose, Twist, advance, wrap_angle

log = logging.getLogger(__name__)

# Command bounds enforced by the simulated base.
V_MAX_ABS = 1.0
W_MAX_ABS = 2.0


class PoseOutOfBounds(ValueError):
    pass


@dataclass(frozen=True)
class RobotState:
    pose: Pose
    twist: Twist = Twist()
    time: float = 0.0

    def __post_init__(self) -> None:
        if self.time < 0:
            raise ValueError("time must be non-negative")


class Disc(NamedTuple):
    x: float
    y: float
    radius: float


@dataclass(frozen=True)
class ObstacleScript:
    """A disc moving piecewise-linearly through timed knots, parked outside them."""

    footprint_radius: float
    path: tuple[tuple[float, Pose], ...]

    def __post_init__(self) -> None:
        knots = tuple((float(t), p if isinstance(p, Pose) else Pose(*p)) for t, p in self.path)
        if not knots:
            raise ValueError("obstacle script needs at least one knot")
        times = [t for t, _ in knots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("knot times must be strictly increasing")
        if self.footprint_radius <= 0:
            raise ValueError("footprint_radius must be positive")
        object.__setattr__(self, "path", knots)

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.path]


@dataclass(frozen=True)
class SensorModel:
    max_range: float = 10.0
    min_range: float = 0.4
    angular_rays: int = 360
    noise_std: float = 0.0
    # "map": the known static map is always present (costmap static layer);
    # "scan": static cells inside max_range appear only through ray returns
    static_layer: str = "map"

    def __post_init__(self) -> None:
        if self.static_layer not in ("map", "scan"):
            raise ValueError("static_layer must be 'map' or 'scan'")
        if not (0 <= self.min_range < self.max_range):
            raise ValueError("need 0 <= min_range < max_range")
        if self.angular_rays < 8:
            raise ValueError("angular_rays must be >= 8")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


@dataclass
class ObservedGrid:
    """What the robot believes: the known static map plus registered sensor hits."""

    grid: OccupancyGrid
    hits: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    hit_ranges: np.ndarray = field(default_factory=lambda: np.zeros(0))


def step_robot(
    state: RobotState,
    cmd: Twist,
    dt: float,
    v_max_abs: float = V_MAX_ABS,
    w_max_abs: float = W_MAX_ABS,
) -> RobotState:
    """Drive ``cmd`` for ``dt`` seconds with exact unicycle integration."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    clamped = cmd.clamped(v_max_abs, w_max_abs)
    if clamped != cmd:
        log.debug("command %s clamped to %s", cmd, clamped)
    return RobotState(advance(state.pose, clamped, dt), clamped, state.time + dt)


def obstacle_pose(script: ObstacleScript, t: float) -> Pose:
    if t < 0:
        raise ValueError("t must be non-negative")
    times = script.times
    if t <= times[0]:
        return script.path[0][1]
    if t >= times[-1]:
        return script.path[-1][1]
    i = bisect_right(times, t) - 1
    (t0, p0), (t1, p1) = script.path[i], script.path[i + 1]
    a = (t - t0) / (t1 - t0)
    return Pose(
        p0.x + a * (p1.x - p0.x),
        p0.y + a * (p1.y - p0.y),
        p0.theta + a * wrap_angle(p1.theta - p0.theta),
    )


def _ray_disc_hits(px: float, py: float, angles: np.ndarray, discs: Sequence[Disc]) -> np.ndarray:
    """Distance along each ray to the first disc boundary it meets (inf if none).

    A sensor inside a disc sees that disc at range 0.
    """
    dx, dy = np.cos(angles), np.sin(angles)
    best = np.full(angles.shape, np.inf)
    for d in discs:
        fx, fy = px - d.x, py - d.y
        c = fx * fx + fy * fy - d.radius * d.radius
        if c <= 0:
            best[:] = 0.0
            continue
        b = fx * dx + fy * dy
        disc = b * b - c
        ok = (disc >= 0) & (b < 0)
        t = np.where(ok, -b - np.sqrt(np.where(ok, disc, 0.0)), np.inf)
        np.minimum(best, t, out=best)
    return best


def _static_blocked_before(grid: OccupancyGrid, px: float, py: float, angles: np.ndarray, limit: np.ndarray) -> np.ndarray:
    """True where a lethal static cell lies on the ray strictly before ``limit``."""
    if angles.size == 0:
        return np.zeros(0, dtype=bool)
    step = grid.resolution * 0.5
    n = int(math.ceil(limit.max() / step)) + 1
    s = np.arange(n) * step
    xs = px + np.cos(angles)[:, None] * s[None, :]
    ys = py + np.sin(angles)[:, None] * s[None, :]
    lethal = grid.value_at(xs, ys, outside=0) == LETHAL
    lethal &= s[None, :] < limit[:, None]
    return lethal.any(axis=1)


def sense(
    state: RobotState,
    static_map: OccupancyGrid,
    obstacles: Sequence[Disc],
    model: SensorModel,
    rng: np.random.Generator | None = None,
) -> ObservedGrid:
    """Ray-cast the scene and overlay registered hits on the static layer.

    With the default ``static_layer="map"`` the known map is always present
    and only the dynamic discs are ray-cast. With ``"scan"`` static cells
    within ``max_range`` are seen only where a ray returns from them.

    A return is registered only when it is the ray's first one and its range
    lies in [min_range, max_range]; closer returns are dropped, which is the
    blind spot that lets a robot charge into a nearby obstacle.
    """
    pose = state.pose
    xmin, xmax, ymin, ymax = static_map.extent
    if not (xmin <= pose.x < xmax and ymin <= pose.y < ymax):
        raise PoseOutOfBounds(f"pose ({pose.x:.3f}, {pose.y:.3f}) outside map")
    scan_static = model.static_layer == "scan"
    if not obstacles and not scan_static:
        return ObservedGrid(static_map.copy())
    angles = pose.theta + 2.0 * math.pi * np.arange(model.angular_rays) / model.angular_rays
    t = _ray_disc_hits(pose.x, pose.y, angles, obstacles)
    if scan_static:
        t = np.minimum(t, _static_first_hit(static_map, pose.x, pose.y, angles, model.max_range))
        grid = _beyond_range(static_map, pose, model.max_range)
        cand = np.flatnonzero(np.isfinite(t))
    else:
        grid = static_map.copy()
        cand = np.flatnonzero(np.isfinite(t) & (t <= model.max_range + 1.0))
        if cand.size:
            occluded = _static_blocked_before(static_map, pose.x, pose.y, angles[cand], t[cand])
            cand = cand[~occluded]
    r = t[cand]
    if model.noise_std > 0 and r.size:
        if rng is None:
            raise ValueError("noisy sensing needs an explicit rng")
        r = r + rng.normal(0.0, model.noise_std, size=r.size)
    keep = (r >= model.min_range) & (r <= model.max_range)
    r = r[keep]
    a = angles[cand][keep]
    hits = np.stack([pose.x + r * np.cos(a), pose.y + r * np.sin(a)], axis=1)
    row, col = grid.world_to_cell(hits[:, 0], hits[:, 1])
    inside = grid.in_bounds(row, col)
    grid.cells[row[inside], col[inside]] = LETHAL
    return ObservedGrid(grid, hits, r)


def _static_first_hit(grid: OccupancyGrid, px: float, py: float, angles: np.ndarray, max_range: float) -> np.ndarray:
    """Range at which each ray first enters a lethal static cell (inf if none within range)."""
    step = grid.resolution * 0.5
    s = np.arange(int(math.ceil(max_range / step)) + 1) * step
    xs = px + np.cos(angles)[:, None] * s[None, :]
    ys = py + np.sin(angles)[:, None] * s[None, :]
    lethal = grid.value_at(xs, ys, outside=0) == LETHAL
    first = np.argmax(lethal, axis=1)
    return np.where(lethal.any(axis=1), s[first], np.inf)


def _beyond_range(grid: OccupancyGrid, pose: Pose, max_range: float) -> OccupancyGrid:
    """Copy of the known map with every cell centre within ``max_range`` cleared."""
    out = grid.copy()
    rows, cols = np.nonzero(out.cells == LETHAL)
    x, y = out.cell_center(rows, cols)
    near = np.hypot(x - pose.x, y - pose.y) <= max_range
    out.cells[rows[near], cols[near]] = 0
    return out


def check_collision(pose: Pose, grid: OccupancyGrid, obstacles: Sequence[Disc], robot_radius: float) -> bool:
    """Ground-truth contact test; touching counts as a collision.

    Static cells are treated as solid squares.
    """
    for d in obstacles:
        if math.hypot(pose.x - d.x, pose.y - d.y) <= robot_radius + d.radius:
            return True
    res = grid.resolution
    r0, c0 = grid.world_to_cell(pose.x - robot_radius, pose.y - robot_radius)
    r1, c1 = grid.world_to_cell(pose.x + robot_radius, pose.y + robot_radius)
    # pad by a cell: an edge exactly at the disc's extent may floor into the neighbour
    r0, c0 = max(int(r0) - 1, 0), max(int(c0) - 1, 0)
    r1, c1 = min(int(r1) + 1, grid.height - 1), min(int(c1) + 1, grid.width - 1)
    if r0 > r1 or c0 > c1:
        return False
    patch = grid.cells[r0 : r1 + 1, c0 : c1 + 1] == LETHAL
    if not patch.any():
        return False
    rows, cols = np.nonzero(patch)
    x0 = grid.origin.x + (cols + c0) * res
    y0 = grid.origin.y + (rows + r0) * res
    cx = np.clip(pose.x, x0, x0 + res)
    cy = np.clip(pose.y, y0, y0 + res)
    return bool(np.any(np.hypot(cx - pose.x, cy - pose.y) <= robot_radius))


def parse_map(text: str) -> OccupancyGrid:
    """Parse the plain-text map format.

    First line ``resolution <m> origin <x> <y>``; then one line per grid row,
    top (largest y) row first, ``.`` free and ``#`` occupied.
    """
    lines = [ln.rstrip("\r") for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ValueError("empty map file")
    head = lines[0].split()
    if len(head) != 5 or head[0] != "resolution" or head[2] != "origin":
        raise ValueError(f"bad map header: {lines[0]!r}")
    res, ox, oy = float(head[1]), float(head[3]), float(head[4])
    body = lines[1:]
    width = len(body[0])
    if any(len(ln) != width for ln in body):
        raise ValueError("map rows have unequal length")
    bad = set("".join(body)) - {".", "#"}
    if bad:
        raise ValueError(f"unexpected map characters: {sorted(bad)}")
    cells = np.array([[LETHAL if ch == "#" else 0 for ch in ln] for ln in reversed(body)], dtype=np.uint8)
    return OccupancyGrid(res, Pose(ox, oy, 0.0), cells)


def load_map(path: str | Path) -> OccupancyGrid:
    return parse_map(Path(path).read_text())


def format_map(grid: OccupancyGrid) -> str:
    rows = ["".join("#" if v == LETHAL else "." for v in row) for row in grid.cells[::-1]]
    head = f"resolution {grid.resolution:g} origin {grid.origin.x:g} {grid.origin.y:g}"
    return "\n".join([head, *rows]) + "\n"
