"""Episode logs: one JSON object per line (header, ticks, footer).

The header carries the schema version, the run identity, the static map as
run-length-encoded rows and the settings needed to recompute metrics. Each
tick line is the per-tick record produced by the episode runner; the footer
holds the outcome and the metrics computed at run time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .config import StackConfig, to_dict
from .costmap import OccupancyGrid, rle_decode_rows, rle_encode_rows
from .geometry import Pose
from .reactive import Outcome
from .scenarios import EpisodeResult, Scenario, reaction_time

SCHEMA_VERSION = 1


class LogError(ValueError):
    pass


class LogTruncated(LogError):
    def __init__(self, path: Path, last_tick: int | None):
        self.last_tick = last_tick
        where = "no complete tick" if last_tick is None else f"last valid tick {last_tick}"
        super().__init__(f"{path}: log is truncated ({where})")


class LogVersionError(LogError):
    def __init__(self, found: Any):
        self.found = found
        super().__init__(f"log schema version {found} is newer than supported version {SCHEMA_VERSION}")


@dataclass
class EpisodeLog:
    header: dict
    ticks: list[dict]
    footer: dict

    @property
    def map(self) -> OccupancyGrid:
        m = self.header["map"]
        cells = rle_decode_rows(m["rows"], m["width"])
        return OccupancyGrid(m["resolution"], Pose(*m["origin"]), cells)

    @property
    def name(self) -> str:
        h = self.header
        return f"{h['scenario']}_{h['planner']}_seed{h['seed']}"


def build_log(result: EpisodeResult, scn: Scenario, cfg: StackConfig) -> EpisodeLog:
    grid = scn.map
    header = {
        "version": SCHEMA_VERSION,
        "kind": "episode",
        "scenario": scn.id,
        "planner": result.planner,
        "seed": result.seed,
        "start": result.start.to_list(),
        "goal": result.goal.to_list(),
        "goal_tolerance": scn.goal_tolerance,
        "time_limit": scn.time_limit,
        "control_period": cfg.sim.control_period,
        "config": to_dict(cfg),
        "map": {
            "resolution": grid.resolution,
            "origin": grid.origin.to_list(),
            "width": grid.width,
            "height": grid.height,
            "rows": rle_encode_rows(grid.cells),
        },
    }
    footer = {"end": True, "outcome": result.outcome.value, "metrics": result.metrics()}
    return EpisodeLog(header, result.ticks, footer)


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), sort_keys=True, allow_nan=False)


def write_log(log: EpisodeLog, path: str | Path) -> Path:
    path = Path(path)
    lines = [_dump(log.header), *(_dump(t) for t in log.ticks), _dump(log.footer)]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_log(path: str | Path) -> EpisodeLog:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise LogError(f"{path}: {exc}") from exc
    lines = text.split("\n")
    if not lines or not lines[0].strip():
        raise LogError(f"{path}: empty log")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise LogError(f"{path}: unreadable header") from exc
    version = header.get("version") if isinstance(header, dict) else None
    if not isinstance(version, int):
        raise LogError(f"{path}: header has no integer 'version' field")
    if version > SCHEMA_VERSION:
        raise LogVersionError(version)
    ticks: list[dict] = []
    footer = None
    for line in lines[1:]:
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            break
        if obj.get("end"):
            footer = obj
            break
        if obj.get("k") != len(ticks):
            break
        ticks.append(obj)
    if footer is None:
        raise LogTruncated(path, ticks[-1]["k"] if ticks else None)
    return EpisodeLog(header, ticks, footer)


def recompute_metrics(log: EpisodeLog) -> dict:
    """Metrics from the stored ticks alone, in the same form as ``EpisodeResult.metrics``."""
    ticks = log.ticks
    if not ticks:
        raise LogError("log has no ticks")
    period = log.header["control_period"]
    nav_time = len(ticks) * period
    path_length = 0.0
    poses = [t["pose"] for t in ticks] + [ticks[-1]["final_pose"]]
    for a, b in zip(poses[:-1], poses[1:]):
        path_length += math.hypot(b[0] - a[0], b[1] - a[1])
    first_visible = next((t["t"] for t in ticks if t["visible"]), None)
    front = [t["min_front"] for t in ticks]
    return {
        "outcome": log.footer["outcome"],
        "nav_time": nav_time,
        "path_length": path_length,
        "mean_speed": path_length / nav_time if nav_time > 0 else 0.0,
        "reaction_time": reaction_time(ticks, first_visible) if first_visible is not None else None,
        "obstacle_first_visible": first_visible,
        "min_front_distance_min": min(front) if front else None,
        "reactive_ticks": sum(t["selected"] == "reactive" for t in ticks),
        "ticks": len(ticks),
        "dwa_violations": sum(t.get("dwa_arc_max_cost", 0) >= 253 for t in ticks),
    }


def result_from_log(log: EpisodeLog) -> EpisodeResult:
    """Rebuild an :class:`EpisodeResult` without re-simulating."""
    m = recompute_metrics(log)
    h = log.header
    return EpisodeResult(
        scenario=h["scenario"],
        planner=h["planner"],
        seed=h["seed"],
        outcome=Outcome(m["outcome"]),
        nav_time=m["nav_time"],
        path_length=m["path_length"],
        mean_speed=m["mean_speed"],
        reaction_time=m["reaction_time"],
        obstacle_first_visible=m["obstacle_first_visible"],
        min_front_distance=[t["min_front"] for t in log.ticks],
        ticks=log.ticks,
        start=Pose(*h["start"]),
        goal=Pose(*h["goal"]),
        dwa_violations=m["dwa_violations"],
    )
