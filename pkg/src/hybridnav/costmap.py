"""Occupancy grids, robot-centred local costmaps and the polar image state.

Cost conventions follow the usual ROS costmap values:

* 0 free, 1..252 decaying inflation cost
* 253 inscribed (robot centre here means contact)
* 254 lethal (an obstacle cell)
* 255 unknown

Grids are stored row-major as ``cells[row, col]`` with row 0 at the bottom
(lowest y) and the grid origin at the outer corner of cell (0, 0).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import ndimage

from .geometry import Pose, wrap_angle

FREE = 0
INSCRIBED = 253
LETHAL = 254
UNKNOWN = 255

_EPS = 1e-9


class GoalOutsideWindow(ValueError):
    pass


@dataclass
class OccupancyGrid:
    resolution: float
    origin: Pose
    cells: np.ndarray

    def __post_init__(self) -> None:
        if self.resolution <= 0:
            raise ValueError("resolution must be positive")
        self.cells = np.asarray(self.cells, dtype=np.uint8)
        if self.cells.ndim != 2:
            raise ValueError("cells must be a 2-D array")

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    def world_to_cell(self, x, y):
        """Return (row, col) integer indices; may lie outside the grid."""
        col = np.floor((np.asarray(x) - self.origin.x) / self.resolution).astype(int)
        row = np.floor((np.asarray(y) - self.origin.y) / self.resolution).astype(int)
        return row, col

    def cell_center(self, row, col):
        x = self.origin.x + (np.asarray(col) + 0.5) * self.resolution
        y = self.origin.y + (np.asarray(row) + 0.5) * self.resolution
        return x, y

    def in_bounds(self, row, col):
        row = np.asarray(row)
        col = np.asarray(col)
        return (row >= 0) & (row < self.height) & (col >= 0) & (col < self.width)

    def value_at(self, x, y, outside: int = UNKNOWN):
        row, col = self.world_to_cell(x, y)
        inside = self.in_bounds(row, col)
        out = np.full(np.shape(row), outside, dtype=np.uint8)
        out[inside] = self.cells[row[inside], col[inside]]
        return out

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, xmax, ymin, ymax) of the grid in world coordinates."""
        return (
            self.origin.x,
            self.origin.x + self.width * self.resolution,
            self.origin.y,
            self.origin.y + self.height * self.resolution,
        )

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(self.resolution, self.origin, self.cells.copy())


@dataclass
class LocalCostmap:
    """Square, world-axis-aligned window whose centre cell sits on the robot."""

    grid: OccupancyGrid
    center: Pose
    side_length: float

    @property
    def half_cells(self) -> int:
        return self.grid.width // 2

    @property
    def resolution(self) -> float:
        return self.grid.resolution

    @property
    def cells(self) -> np.ndarray:
        return self.grid.cells

    def contains(self, x: float, y: float) -> bool:
        half = (self.half_cells + 0.5) * self.resolution
        return abs(x - self.center.x) <= half and abs(y - self.center.y) <= half

    def lookup(self, x, y):
        """Cost at world points, nearest-cell, unknown outside the window."""
        res = self.resolution
        h = self.half_cells
        col = np.rint((np.asarray(x, dtype=float) - self.center.x) / res).astype(int) + h
        row = np.rint((np.asarray(y, dtype=float) - self.center.y) / res).astype(int) + h
        n = self.grid.width
        inside = (row >= 0) & (row < n) & (col >= 0) & (col < n)
        out = np.full(np.shape(row), UNKNOWN, dtype=np.uint8)
        out[inside] = self.cells[row[inside], col[inside]]
        return out

    def with_cells(self, cells: np.ndarray) -> "LocalCostmap":
        return LocalCostmap(OccupancyGrid(self.grid.resolution, self.grid.origin, cells), self.center, self.side_length)


@dataclass
class PolarImage:
    """Range x bearing raster in the robot frame.

    ``obstacle`` and ``goal`` have shape (rows, cols). Row i covers bearings
    (-pi + i*d, -pi + (i+1)*d] with d = 2*pi/rows, so the robot heading sits
    on the boundary between the two middle rows. Column j covers ranges
    [j*r_max/cols, (j+1)*r_max/cols).
    """

    obstacle: np.ndarray
    goal: np.ndarray
    r_max: float

    @property
    def rows(self) -> int:
        return self.obstacle.shape[0]

    @property
    def cols(self) -> int:
        return self.obstacle.shape[1]

    @property
    def row_bearings(self) -> np.ndarray:
        d = 2.0 * math.pi / self.rows
        return -math.pi + (np.arange(self.rows) + 0.5) * d

    @property
    def col_ranges(self) -> np.ndarray:
        return (np.arange(self.cols) + 0.5) * self.r_max / self.cols

    def stacked(self) -> np.ndarray:
        return np.stack([self.obstacle, self.goal])


def bearing_row(bearing, rows: int):
    """Row index for bearings in (-pi, pi] (scalar or array)."""
    d = 2.0 * math.pi / rows
    idx = np.ceil((np.asarray(bearing) + math.pi) / d - _EPS).astype(int) - 1
    return np.clip(idx, 0, rows - 1)


def extract_local(world_grid: OccupancyGrid, pose: Pose, side_length: float, resolution: float) -> LocalCostmap:
    """Resample the window of ``side_length`` around ``pose`` from ``world_grid``.

    The window has an odd number of cells so the robot owns the centre cell.
    Cells falling off the world grid are unknown.
    """
    if side_length <= 0:
        raise ValueError("side_length must be positive")
    half = int(round(side_length / (2.0 * resolution)))
    offsets = (np.arange(2 * half + 1) - half) * resolution
    row, col = world_grid.world_to_cell(pose.x + offsets, pose.y + offsets)
    vr = np.flatnonzero((row >= 0) & (row < world_grid.height))
    vc = np.flatnonzero((col >= 0) & (col < world_grid.width))
    cells = np.full((offsets.size, offsets.size), UNKNOWN, dtype=np.uint8)
    if vr.size and vc.size:
        cells[np.ix_(vr, vc)] = world_grid.cells[np.ix_(row[vr], col[vc])]
    origin = Pose(pose.x - (half + 0.5) * resolution, pose.y - (half + 0.5) * resolution, 0.0)
    return LocalCostmap(OccupancyGrid(resolution, origin, cells), Pose(pose.x, pose.y, pose.theta), side_length)


def inflation_costs(distance: np.ndarray, robot_radius: float, decay_radius: float) -> np.ndarray:
    """Cost as a function of metric distance to the nearest lethal cell."""
    out = np.zeros(distance.shape, dtype=np.uint8)
    out[distance <= robot_radius + _EPS] = INSCRIBED
    if decay_radius > robot_radius:
        band = (distance > robot_radius + _EPS) & (distance <= decay_radius + _EPS)
        k = math.log(252.0) / (decay_radius - robot_radius)
        vals = 252.0 * np.exp(-k * (distance[band] - robot_radius))
        out[band] = np.clip(np.rint(vals), 1, 252).astype(np.uint8)
    out[distance == 0] = LETHAL
    return out


def inflate_cells(cells: np.ndarray, resolution: float, robot_radius: float, decay_radius: float) -> np.ndarray:
    if decay_radius < robot_radius:
        raise ValueError("decay_radius must be >= robot_radius")
    lethal = cells == LETHAL
    if not lethal.any():
        return cells.copy()
    dist = ndimage.distance_transform_edt(~lethal, sampling=resolution)
    return np.maximum(cells, inflation_costs(dist, robot_radius, decay_radius))


def inflate(costmap: LocalCostmap, robot_radius: float, decay_radius: float) -> LocalCostmap:
    """Spread lethal cells outward: inscribed band, then exponential decay."""
    return costmap.with_cells(inflate_cells(costmap.cells, costmap.resolution, robot_radius, decay_radius))


def inflate_grid(grid: OccupancyGrid, robot_radius: float, decay_radius: float) -> OccupancyGrid:
    return OccupancyGrid(grid.resolution, grid.origin, inflate_cells(grid.cells, grid.resolution, robot_radius, decay_radius))


@lru_cache(maxsize=16)
def _window_geometry(n: int, resolution: float, rows: int, cols: int, r_max: float):
    """Per-cell (range column, world bearing) for an n x n robot-centred window."""
    h = n // 2
    off = (np.arange(n) - h) * resolution
    dx = np.broadcast_to(off[None, :], (n, n))
    dy = np.broadcast_to(off[:, None], (n, n))
    rng = np.hypot(dx, dy)
    col = np.clip(np.floor(rng / r_max * cols).astype(int), 0, cols - 1)
    world_bearing = np.arctan2(dy, dx)
    col.setflags(write=False)
    world_bearing.setflags(write=False)
    return col, world_bearing


def _goal_blob(rows: int, cols: int, u: float, v: float, radius: float) -> np.ndarray:
    ii = np.arange(rows)[:, None] + 0.5
    jj = np.arange(cols)[None, :] + 0.5
    du = np.abs(ii - u)
    du = np.minimum(du, rows - du)
    return ((du**2 + (jj - v) ** 2) <= radius**2 + _EPS).astype(np.float32)


def to_polar(
    costmap: LocalCostmap,
    goal: Pose | None,
    rows: int = 64,
    cols: int = 64,
    r_max: float | None = None,
    goal_radius: float = 2.0,
) -> PolarImage:
    """Polar (bearing x range) image of obstacles and the goal in the robot frame.

    Unknown cells are left out of the obstacle channel.
    """
    n = costmap.grid.width
    if r_max is None:
        r_max = costmap.side_length * math.sqrt(2.0) / 2.0
    col, world_bearing = _window_geometry(n, costmap.resolution, rows, cols, round(r_max, 12))
    obstacle = np.zeros((rows, cols), dtype=np.float32)
    cells = costmap.cells
    mask = (cells > 0) & (cells != UNKNOWN)
    if mask.any():
        b = wrap_angle(world_bearing[mask] - costmap.center.theta)
        r_idx = bearing_row(b, rows)
        vals = cells[mask].astype(np.float32) / LETHAL
        np.maximum.at(obstacle, (r_idx, col[mask]), vals)

    goal_img = np.zeros((rows, cols), dtype=np.float32)
    if goal is not None:
        if not costmap.contains(goal.x, goal.y):
            raise GoalOutsideWindow(f"goal ({goal.x:.2f}, {goal.y:.2f}) is outside the local window")
        b = costmap.center.bearing_to(goal.x, goal.y)
        rho = costmap.center.distance_to(goal)
        u = (b + math.pi) / (2.0 * math.pi) * rows
        v = min(rho / r_max, 1.0) * cols
        goal_img = _goal_blob(rows, cols, u, v, goal_radius)
    return PolarImage(obstacle, goal_img, float(r_max))


def polar_pixel_to_world(img: PolarImage, center: Pose, row: int, col: int) -> tuple[float, float]:
    b = img.row_bearings[row] + center.theta
    r = img.col_ranges[col]
    return center.x + r * math.cos(b), center.y + r * math.sin(b)


def polar_cell_diagonal(img: PolarImage, col: int) -> float:
    """Largest distance between two points of the annular sector of a pixel."""
    dr = img.r_max / img.cols
    r_outer = (col + 1) * dr
    return math.hypot(dr, r_outer * 2.0 * math.pi / img.rows)


def kernel_penalty(costmap: LocalCostmap, kernel_radius: float = 1.0, sigma: float = 0.5) -> float:
    """Truncated-Gaussian-weighted sum of normalised cost around the robot.

    The kernel peaks at 1 on the robot's own cell; unknown cells contribute 0.
    """
    if kernel_radius <= 0:
        raise ValueError("kernel_radius must be positive")
    n = costmap.grid.width
    h = n // 2
    k = int(math.floor(kernel_radius / costmap.resolution + _EPS))
    lo, hi = max(h - k, 0), min(h + k + 1, n)
    patch = costmap.cells[lo:hi, lo:hi]
    off = (np.arange(lo, hi) - h) * costmap.resolution
    d2 = off[None, :] ** 2 + off[:, None] ** 2
    inside = d2 <= kernel_radius**2 + _EPS
    norm = np.where(patch == UNKNOWN, 0.0, patch.astype(float) / LETHAL)
    weights = np.exp(-d2 / (2.0 * sigma**2))
    return float(np.sum(weights * norm * inside))


def write_pgm(img: PolarImage, prefix: str | Path) -> tuple[Path, Path]:
    """Dump both channels as binary 8-bit PGM files (``<prefix>_obstacle.pgm``, ``<prefix>_goal.pgm``)."""
    prefix = Path(prefix)
    paths = []
    for name, channel in (("obstacle", img.obstacle), ("goal", img.goal)):
        path = prefix.with_name(f"{prefix.name}_{name}.pgm")
        data = np.clip(np.rint(channel * 255.0), 0, 255).astype(np.uint8)
        header = f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii")
        path.write_bytes(header + data.tobytes())
        paths.append(path)
    return paths[0], paths[1]


def read_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(b"\n", 3)
    if parts[0] != b"P5":
        raise ValueError("not a binary PGM")
    w, h = (int(s) for s in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h).reshape(h, w)


def rle_encode_rows(cells: np.ndarray) -> list[list[int]]:
    """Each row as a flat [value, count, value, count, ...] list."""
    out = []
    for row in np.asarray(cells):
        change = np.flatnonzero(np.diff(row)) + 1
        starts = np.concatenate(([0], change))
        counts = np.diff(np.concatenate((starts, [row.size])))
        flat = np.empty(2 * starts.size, dtype=int)
        flat[0::2] = row[starts]
        flat[1::2] = counts
        out.append(flat.tolist())
    return out


def rle_decode_rows(rows: list[list[int]], width: int) -> np.ndarray:
    out = np.zeros((len(rows), width), dtype=np.uint8)
    for i, flat in enumerate(rows):
        vals = np.asarray(flat[0::2], dtype=np.uint8)
        counts = np.asarray(flat[1::2], dtype=int)
        if counts.sum() != width:
            raise ValueError(f"RLE row {i} has {counts.sum()} cells, expected {width}")
        out[i] = np.repeat(vals, counts)
    return out
