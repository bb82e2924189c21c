import numpy as np
import pytest

from hybridnav.costmap import LocalCostmap, OccupancyGrid
from hybridnav.geometry import Pose
from hybridnav.global_planner import WaypointSet


def make_local(n: int = 121, res: float = 0.05, center: Pose = Pose(0.0, 0.0, 0.0), cells=None) -> LocalCostmap:
    """Robot-centred window built directly, without going through a world grid."""
    h = n // 2
    if cells is None:
        cells = np.zeros((n, n), dtype=np.uint8)
    origin = Pose(center.x - (h + 0.5) * res, center.y - (h + 0.5) * res, 0.0)
    return LocalCostmap(OccupancyGrid(res, origin, cells), center, n * res)


def local_cell(local: LocalCostmap, x: float, y: float) -> tuple[int, int]:
    h = local.half_cells
    res = local.resolution
    return int(round((y - local.center.y) / res)) + h, int(round((x - local.center.x) / res)) + h


def line_waypoints(x0, y0, x1, y1, n=8) -> WaypointSet:
    pts = np.stack([np.linspace(x0, x1, n), np.linspace(y0, y1, n)], axis=1)
    heading = np.full(n, np.arctan2(y1 - y0, x1 - x0))
    return WaypointSet(pts, heading, np.zeros(n, dtype=bool))


def empty_grid(width: int, height: int, res: float = 0.05, origin=(0.0, 0.0)) -> OccupancyGrid:
    return OccupancyGrid(res, Pose(origin[0], origin[1], 0.0), np.zeros((height, width), dtype=np.uint8))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            if getattr(rep, "when", None) == "call":
                lines.extend(v for k, v in rep.user_properties if k == "acceptance")
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
