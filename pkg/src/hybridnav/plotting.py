"""Per-episode trajectory figures rendered to byte-stable SVG."""

from __future__ import annotations

import io
from pathlib import Path

import matplotlib

matplotlib.use("svg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.collections import LineCollection  # noqa: E402
from matplotlib.patches import Circle  # noqa: E402

from .logs import EpisodeLog  # noqa: E402

CMAP = "viridis"
V_RANGE = (-0.5, 1.0)


def render_svg(log: EpisodeLog) -> bytes:
    """Map in grey, obstacle positions over time, path coloured by linear velocity.

    Ticks where the reactive planner drove are drawn as circles with a thick
    black border.
    """
    with plt.rc_context({"svg.hashsalt": "hybridnav", "svg.fonttype": "none", "path.simplify": False}):
        grid = log.map
        x0, y0, x1, y1 = (
            grid.origin.x,
            grid.origin.y,
            grid.origin.x + grid.width * grid.resolution,
            grid.origin.y + grid.height * grid.resolution,
        )
        aspect = (y1 - y0) / max(x1 - x0, 1e-9)
        fig, ax = plt.subplots(figsize=(7.0, max(2.5, 7.0 * aspect) + 0.6))
        ax.imshow(
            grid.cells >= 254,
            origin="lower",
            extent=(x0, x1, y0, y1),
            cmap="Greys",
            vmin=0,
            vmax=1.6,
            interpolation="nearest",
        )
        seen = set()
        for t in log.ticks:
            for ox, oy, r in t["obstacles"]:
                key = (round(ox, 3), round(oy, 3))
                if key in seen:
                    continue
                seen.add(key)
                ax.add_patch(Circle((ox, oy), r, color="0.55", alpha=0.25, lw=0))

        poses = np.array([t["pose"] for t in log.ticks] + [log.ticks[-1]["final_pose"]])
        v = np.array([t["cmd"][0] for t in log.ticks])
        segs = np.stack([poses[:-1, :2], poses[1:, :2]], axis=1)
        lc = LineCollection(segs, cmap=CMAP, norm=plt.Normalize(*V_RANGE), linewidths=2.5)
        lc.set_array(v)
        ax.add_collection(lc)
        reactive = np.array([t["selected"] == "reactive" for t in log.ticks])
        if reactive.any():
            ax.scatter(
                poses[:-1][reactive, 0],
                poses[:-1][reactive, 1],
                c=v[reactive],
                cmap=CMAP,
                vmin=V_RANGE[0],
                vmax=V_RANGE[1],
                s=36,
                edgecolors="black",
                linewidths=1.8,
                zorder=3,
            )
        h = log.header
        ax.plot(*h["start"][:2], marker="o", color="tab:blue", ms=8, zorder=4)
        ax.plot(*h["goal"][:2], marker="*", color="tab:red", ms=12, zorder=4)
        outcome = log.footer["outcome"]
        if outcome == "Collided":
            ax.plot(*poses[-1, :2], marker="X", color="red", ms=12, mec="black", zorder=5)
        fig.colorbar(lc, ax=ax, label="linear velocity [m/s]", shrink=0.8)
        ax.set_xlim(x0, x1)
        ax.set_ylim(y0, y1)
        ax.set_aspect("equal")
        ax.set_xlabel("x [m]")
        ax.set_ylabel("y [m]")
        ax.set_title(f"{h['scenario']} / {h['planner']} / seed {h['seed']}: {outcome}")
        buf = io.StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None}, bbox_inches="tight")
        plt.close(fig)
    text = buf.getvalue()
    note = f"<!-- trajectory colour: {CMAP} colormap over linear velocity {V_RANGE[0]} to {V_RANGE[1]} m/s -->\n"
    head, sep, rest = text.partition("?>\n")
    text = head + sep + note + rest if sep else note + text
    return text.encode("utf-8")


def write_svg(log: EpisodeLog, path: str | Path) -> Path:
    path = Path(path)
    path.write_bytes(render_svg(log))
    return path
