"""Regenerate the built-in scenario maps from box lists.

Run from the repository root: ``python scripts/make_scenario_maps.py``.
"""

from pathlib import Path

import numpy as np

from hybridnav.costmap import LETHAL, OccupancyGrid
from hybridnav.geometry import Pose
from hybridnav.world import format_map

RES = 0.05
OUT = Path(__file__).resolve().parents[1] / "src" / "hybridnav" / "scenarios" / "maps"


def box_map(width: float, height: float, boxes, wall: float = 0.1) -> OccupancyGrid:
    """Walled rectangle plus solid boxes given as (x0, y0, x1, y1) in metres."""
    nx, ny = int(round(width / RES)), int(round(height / RES))
    cells = np.zeros((ny, nx), dtype=np.uint8)
    w = int(round(wall / RES))
    cells[:w, :] = cells[-w:, :] = LETHAL
    cells[:, :w] = cells[:, -w:] = LETHAL
    for x0, y0, x1, y1 in boxes:
        c0, c1 = int(round(x0 / RES)), int(round(x1 / RES))
        r0, r1 = int(round(y0 / RES)), int(round(y1 / RES))
        cells[r0:r1, c0:c1] = LETHAL
    return OccupancyGrid(RES, Pose(0.0, 0.0), cells)


MAPS = {
    # U-shaped route: up the left leg, through a 0.9 m doorway in the top
    # connector, down the right leg
    "c1_two_rooms.txt": box_map(
        7.4, 6.4, [(1.7, 0.0, 5.7, 4.7), (3.5, 4.7, 3.9, 5.05), (3.5, 5.95, 3.9, 6.4)]
    ),
    # straight corridor
    "c2_corridor.txt": box_map(12.0, 2.6, []),
    # open rooms
    "c3_open_room.txt": box_map(12.0, 8.0, []),
    "c4_open_room.txt": box_map(12.0, 8.0, []),
}


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for name, grid in MAPS.items():
        (OUT / name).write_text(format_map(grid))
        print(name, grid.cells.shape)
