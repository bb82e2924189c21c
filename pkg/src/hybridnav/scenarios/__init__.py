"""Scenario definitions, the closed-loop episode runner and trajectory metrics.

Built-in scenarios ``C1``..``C4`` live next to this module as YAML files
plus plain-text maps.
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from .. import dwa
from ..config import ConfigError, StackConfig
from ..costmap import INSCRIBED, LETHAL, OccupancyGrid, inflate_grid, rle_encode_rows
from ..geometry import Pose
from ..global_planner import GlobalPlan, NoPathExists, StartOrGoalOccupied, plan_dijkstra
from ..hybrid import HybridPlanner, LocalStack, Selected
from ..reactive import BuiltinPolicy, Outcome
from ..world import (
    Disc,
    ObservedGrid,
    ObstacleScript,
    RobotState,
    SensorModel,
    check_collision,
    obstacle_pose,
    parse_map,
    sense,
    step_robot,
)

log = logging.getLogger(__name__)

BUILTIN = ("C1", "C2", "C3", "C4")
PLANNERS = ("dwa", "reactive", "hybrid")
TURN_THRESHOLD = 0.1
FRONT_HALF_ANGLE = math.pi / 4


class ConfigInvalid(ConfigError):
    pass


class ObstacleNeverVisible(ValueError):
    pass


@dataclass(frozen=True)
class Jitter:
    start_xy: float = 0.0
    start_theta: float = 0.0
    spawn_time: float = 0.0
    obstacle_xy: float = 0.0


@dataclass(frozen=True)
class Scenario:
    id: str
    map: OccupancyGrid
    map_text: str
    start: Pose
    goal: Pose
    obstacles: tuple[ObstacleScript, ...] = ()
    spawn_time: float = 0.0
    time_limit: float = 60.0
    goal_tolerance: float = 0.25
    sensor: SensorModel = field(default_factory=SensorModel)
    runs: int = 10
    swap_alternate: bool = False
    jitter: Jitter = field(default_factory=Jitter)
    description: str = ""

    def __post_init__(self) -> None:
        if self.spawn_time < 0:
            raise ConfigInvalid("spawn_time must be >= 0")
        if self.time_limit <= 0:
            raise ConfigInvalid("time_limit must be positive")


def _pose(v: Any, what: str) -> Pose:
    if not isinstance(v, (list, tuple)) or len(v) not in (2, 3):
        raise ConfigInvalid(f"{what} must be [x, y] or [x, y, theta]")
    return Pose(*map(float, v))


def parse_scenario(doc: dict, map_text: str) -> Scenario:
    try:
        grid = parse_map(map_text)
        obstacles = []
        for i, ob in enumerate(doc.get("obstacles") or []):
            knots = tuple((float(k[0]), Pose(*map(float, k[1:]))) for k in ob["path"])
            obstacles.append(ObstacleScript(float(ob["radius"]), knots))
        sensor = SensorModel(**(doc.get("sensor") or {}))
        jitter = Jitter(**(doc.get("jitter") or {}))
        return Scenario(
            id=str(doc["id"]),
            map=grid,
            map_text=map_text,
            start=_pose(doc["start"], "start"),
            goal=_pose(doc["goal"], "goal"),
            obstacles=tuple(obstacles),
            spawn_time=float(doc.get("spawn_time", 0.0)),
            time_limit=float(doc.get("time_limit", 60.0)),
            goal_tolerance=float(doc.get("goal_tolerance", 0.25)),
            sensor=sensor,
            runs=int(doc.get("runs", 10)),
            swap_alternate=bool(doc.get("swap_alternate", False)),
            jitter=jitter,
            description=str(doc.get("description", "")),
        )
    except ConfigInvalid:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid scenario: {exc}") from exc


def load_scenario(ref: str | Path) -> Scenario:
    """Load ``C1``..``C4`` by name or a scenario YAML by path."""
    ref_s = str(ref)
    if ref_s.upper() in BUILTIN and not Path(ref_s).exists():
        base = resources.files(__name__)
        doc_text = (base / f"{ref_s.upper()}.yaml").read_text()
        doc = yaml.safe_load(doc_text)
        map_text = (base / "maps" / doc["map"]).read_text()
        return parse_scenario(doc, map_text)
    path = Path(ref_s)
    if not path.exists():
        raise ConfigInvalid(f"scenario not found: {ref_s}")
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigInvalid(f"cannot parse {path}: {exc}") from exc
    if not isinstance(doc, dict) or "map" not in doc:
        raise ConfigInvalid(f"{path}: scenario must be a mapping with a 'map' entry")
    map_path = (path.parent / doc["map"]) if not Path(doc["map"]).is_absolute() else Path(doc["map"])
    if not map_path.exists():
        alt = path.parent / "maps" / doc["map"]
        if not alt.exists():
            raise ConfigInvalid(f"map file not found: {doc['map']}")
        map_path = alt
    return parse_scenario(doc, map_path.read_text())


# --- episode ----------------------------------------------------------------


@dataclass
class EpisodeResult:
    scenario: str
    planner: str
    seed: int
    outcome: Outcome
    nav_time: float
    path_length: float
    mean_speed: float
    reaction_time: float | None
    obstacle_first_visible: float | None
    min_front_distance: list[float]
    ticks: list[dict]
    start: Pose
    goal: Pose
    dwa_violations: int = 0

    def metrics(self) -> dict:
        return {
            "outcome": self.outcome.value,
            "nav_time": self.nav_time,
            "path_length": self.path_length,
            "mean_speed": self.mean_speed,
            "reaction_time": self.reaction_time,
            "obstacle_first_visible": self.obstacle_first_visible,
            "min_front_distance_min": min(self.min_front_distance) if self.min_front_distance else None,
            "reactive_ticks": sum(t["selected"] == Selected.REACTIVE.value for t in self.ticks),
            "ticks": len(self.ticks),
            "dwa_violations": self.dwa_violations,
        }


_PLAN_CACHE: dict[tuple, tuple[GlobalPlan, OccupancyGrid]] = {}


def global_plan_for(scn: Scenario, start: Pose, goal: Pose, cfg: StackConfig) -> GlobalPlan:
    """Plan once on the static map inflated for planning; cached per map and endpoints."""
    key = (
        hashlib.sha1(scn.map.cells.tobytes()).hexdigest(),
        scn.map.cells.shape,
        scn.map.resolution,
        tuple(scn.map.world_to_cell(start.x, start.y)),
        tuple(scn.map.world_to_cell(goal.x, goal.y)),
        cfg.robot.radius,
        cfg.costmap.plan_decay_radius,
    )
    if key not in _PLAN_CACHE:
        costs = inflate_grid(scn.map, cfg.robot.radius, cfg.costmap.plan_decay_radius)
        s = tuple(int(v) for v in scn.map.world_to_cell(start.x, start.y))
        g = tuple(int(v) for v in scn.map.world_to_cell(goal.x, goal.y))
        _PLAN_CACHE[key] = (plan_dijkstra(costs, s, g), costs)
        if len(_PLAN_CACHE) > 64:
            _PLAN_CACHE.pop(next(iter(_PLAN_CACHE)))
    return _PLAN_CACHE[key][0]


def _endpoints(scn: Scenario, seed: int) -> tuple[Pose, Pose]:
    if scn.swap_alternate and seed % 2 == 1:
        return Pose(scn.goal.x, scn.goal.y, scn.goal.theta + math.pi), Pose(scn.start.x, scn.start.y, scn.start.theta + math.pi)
    return scn.start, scn.goal


def episode_setup(scn: Scenario, seed: int) -> tuple[Pose, Pose, float, list[ObstacleScript]]:
    """Seeded per-run variation: start/goal swap, start jitter, obstacle timing/offset.

    The global plan is made from the unjittered start; the robot begins a few
    centimetres off it.
    """
    rng = np.random.default_rng(seed)
    start, goal = _endpoints(scn, seed)
    j = scn.jitter
    dx, dy, dth, dt_spawn, ox, oy = rng.standard_normal(6)
    start = Pose(start.x + j.start_xy * dx, start.y + j.start_xy * dy, start.theta + j.start_theta * dth)
    spawn = max(0.0, scn.spawn_time + j.spawn_time * float(np.clip(dt_spawn, -1, 1)))
    scripts = []
    for sc in scn.obstacles:
        knots = tuple((t, Pose(p.x + j.obstacle_xy * ox, p.y + j.obstacle_xy * oy, p.theta)) for t, p in sc.path)
        scripts.append(ObstacleScript(sc.footprint_radius, knots))
    return start, goal, spawn, scripts


def active_obstacles(scripts: Sequence[ObstacleScript], spawn: float, t: float) -> list[Disc]:
    if t < spawn:
        return []
    out = []
    for sc in scripts:
        p = obstacle_pose(sc, t - spawn)
        out.append(Disc(p.x, p.y, sc.footprint_radius))
    return out


def occupied_points(observed: OccupancyGrid | ObservedGrid, max_range: float | None = None, around: Pose | None = None) -> np.ndarray:
    """Centres of lethal cells as a (k, 2) array, optionally limited to a box around a pose."""
    grid = observed.grid if isinstance(observed, ObservedGrid) else observed
    r0, c0, r1, c1 = 0, 0, grid.height - 1, grid.width - 1
    if around is not None and max_range is not None:
        a0, b0 = grid.world_to_cell(around.x - max_range, around.y - max_range)
        a1, b1 = grid.world_to_cell(around.x + max_range, around.y + max_range)
        r0, c0 = max(int(a0), 0), max(int(b0), 0)
        r1, c1 = min(int(a1), grid.height - 1), min(int(b1), grid.width - 1)
    if r0 > r1 or c0 > c1:
        return np.zeros((0, 2))
    rows, cols = np.nonzero(grid.cells[r0 : r1 + 1, c0 : c1 + 1] == LETHAL)
    x, y = grid.cell_center(rows + r0, cols + c0)
    return np.column_stack([x, y]).astype(float)


def min_front_distance(
    pose: Pose,
    observed: OccupancyGrid | ObservedGrid | np.ndarray,
    max_range: float = 10.0,
) -> float:
    """Nearest occupied cell centre within +-pi/4 of the heading (``max_range`` if none).

    ``observed`` may also be a precomputed (k, 2) array of occupied cell centres.
    """
    pts = observed if isinstance(observed, np.ndarray) else occupied_points(observed, max_range, pose)
    if pts.size == 0:
        return max_range
    dx, dy = pts[:, 0] - pose.x, pts[:, 1] - pose.y
    rng = np.hypot(dx, dy)
    bearing = np.angle(np.exp(1j * (np.arctan2(dy, dx) - pose.theta)))
    sel = (np.abs(bearing) <= FRONT_HALF_ANGLE + 1e-12) & (rng <= max_range)
    return float(rng[sel].min()) if sel.any() else max_range


def reaction_time(ticks: Sequence[dict], obstacle_first_visible: float | None) -> float | None:
    """Seconds from first visibility to the start of a sustained turn.

    A turn is |w| > 0.1 rad/s on at least two consecutive ticks; a turn already
    under way at visibility gives 0. ``None`` when the robot never turns.
    """
    if obstacle_first_visible is None:
        raise ObstacleNeverVisible("the dynamic obstacle never entered the local costmap")
    turning = [abs(t["cmd"][1]) > TURN_THRESHOLD for t in ticks]
    times = [t["t"] for t in ticks]
    run_start = None
    for i, on in enumerate(turning):
        if not on:
            run_start = None
            continue
        if run_start is None:
            run_start = i
        if i - run_start >= 1 and times[i] >= obstacle_first_visible:
            return round(max(0.0, times[run_start] - obstacle_first_visible), 9)
    return None


def _local_visible(hits: np.ndarray, pose: Pose, half: float) -> bool:
    if hits.size == 0:
        return False
    return bool(np.any((np.abs(hits[:, 0] - pose.x) <= half) & (np.abs(hits[:, 1] - pose.y) <= half)))


def run_episode(scn: Scenario, planner: str, seed: int, cfg: StackConfig | None = None) -> EpisodeResult:
    """Closed-loop run at the control rate until goal, collision or time limit."""
    if planner not in PLANNERS:
        raise ConfigInvalid(f"unknown planner {planner!r}")
    cfg = cfg or StackConfig()
    sensor = cfg.sensor or scn.sensor
    period, sub = cfg.sim.control_period, cfg.sim.substep
    n_sub = max(int(round(period / sub)), 1)
    nominal, goal = _endpoints(scn, seed)
    start, _, spawn, scripts = episode_setup(scn, seed)
    rng = np.random.default_rng(seed + 1_000_003)
    if check_collision(start, scn.map, active_obstacles(scripts, spawn, 0.0), cfg.robot.radius):
        raise ConfigInvalid("robot starts in collision")
    try:
        plan = global_plan_for(scn, nominal, goal, cfg)
    except (StartOrGoalOccupied, NoPathExists) as exc:
        raise ConfigInvalid(f"scenario {scn.id}: {exc}") from exc
    static_pts = occupied_points(scn.map)

    hybrid = HybridPlanner(plan, cfg) if planner == "hybrid" else None
    stack = hybrid.stack if hybrid else LocalStack(plan, cfg)
    policy = BuiltinPolicy(cfg.reactive)

    state = RobotState(start)
    half = cfg.costmap.side_length / 2
    ticks: list[dict] = []
    front: list[float] = []
    outcome = Outcome.TIMEOUT
    first_visible = None
    violations = 0
    path_length = 0.0
    max_ticks = int(math.ceil(scn.time_limit / period - 1e-9))

    for k in range(max_ticks):
        t = k * period
        discs = active_obstacles(scripts, spawn, t)
        observed = sense(state, scn.map, discs, sensor, rng)
        visible = _local_visible(observed.hits, state.pose, half)
        if visible and first_visible is None:
            first_visible = t

        rec: dict[str, Any] = {"k": k, "t": round(t, 9), "pose": state.pose.to_list()}
        if hybrid is not None:
            out = hybrid.step(state, observed)
            view, d = out.view, out.dwa_result
            cmd, selected = out.decision.command, out.decision.selected
            rec.update(
                clearance=out.clearance.value,
                filter=out.decision.filter_window,
                fallthrough=out.decision.fallthrough,
            )
        else:
            view = stack.view(state, observed)
            if planner == "dwa":
                d = stack.dwa_command(state, view)
                cmd, selected = d.command, Selected.DWA
            else:
                d = None
                cmd, selected = policy.act(view.polar), Selected.REACTIVE
        if d is not None and selected is Selected.DWA and not d.all_infeasible:
            worst = dwa.arc_max_cost(state.pose, cmd, view.costmap, cfg.dwa)
            rec["dwa_arc_max_cost"] = worst
            violations += worst >= INSCRIBED
        rec.update(
            cmd=cmd.to_list(),
            selected=selected.value,
            dwa_infeasible=bool(d.all_infeasible) if d is not None else None,
            waypoints=view.waypoints.triples(),
            reactive_goal=[view.reactive_goal.x, view.reactive_goal.y],
            obstacles=[[o.x, o.y, o.radius] for o in discs],
            visible=visible,
        )
        if k == 0 or selected.value != ticks[-1]["selected"]:
            # local costmap snapshot whenever the active planner changes
            rec["costmap"] = {
                "center": view.costmap.center.to_list(),
                "resolution": view.costmap.resolution,
                "rows": rle_encode_rows(view.costmap.cells),
            }
        hit_pts = np.zeros((0, 2))
        if observed.hits.size:
            hr, hc = scn.map.world_to_cell(observed.hits[:, 0], observed.hits[:, 1])
            inside = scn.map.in_bounds(hr, hc)
            hit_pts = np.column_stack(scn.map.cell_center(hr[inside], hc[inside]))
        mfd = min_front_distance(state.pose, np.vstack([static_pts, hit_pts]), sensor.max_range)
        rec["min_front"] = mfd
        front.append(mfd)
        ticks.append(rec)

        before = state.pose
        done = None
        for s in range(1, n_sub + 1):
            state = step_robot(state, cmd, period / n_sub)
            ts = t + s * period / n_sub
            if check_collision(state.pose, scn.map, active_obstacles(scripts, spawn, ts), cfg.robot.radius):
                done = Outcome.COLLIDED
                break
            if state.pose.distance_to(goal) <= scn.goal_tolerance:
                done = Outcome.REACHED
                break
        state = RobotState(state.pose, state.twist, (k + 1) * period)
        path_length += before.distance_to(state.pose)
        if done is not None:
            outcome = done
            break

    nav_time = len(ticks) * period
    result = EpisodeResult(
        scenario=scn.id,
        planner=planner,
        seed=seed,
        outcome=outcome,
        nav_time=nav_time,
        path_length=path_length,
        mean_speed=path_length / nav_time if nav_time > 0 else 0.0,
        reaction_time=None,
        obstacle_first_visible=first_visible,
        min_front_distance=front,
        ticks=ticks,
        start=start,
        goal=goal,
        dwa_violations=violations,
    )
    result.ticks[-1]["final_pose"] = state.pose.to_list()
    if first_visible is not None:
        result.reaction_time = reaction_time(ticks, first_visible)
    return result


# --- aggregation ------------------------------------------------------------

SUMMARY_FIELDS = (
    "scenario",
    "planner",
    "runs",
    "time",
    "distance",
    "speed",
    "collision_pct",
    "success_pct",
    "timeout_pct",
    "reaction_time",
)


def aggregate(results: Sequence[EpisodeResult]) -> list[dict]:
    """Per (scenario, planner) means over all runs, Table-I style.

    Collided and timed-out runs are included in the time/distance/speed means.
    Buckets with no runs produce no row.
    """
    if not results:
        raise ValueError("nothing to aggregate")
    order_s: list[str] = []
    buckets: dict[tuple[str, str], list[EpisodeResult]] = {}
    for r in results:
        if r.scenario not in order_s:
            order_s.append(r.scenario)
        buckets.setdefault((r.scenario, r.planner), []).append(r)
    rows = []
    for s in order_s:
        for p in PLANNERS:
            rs = buckets.get((s, p))
            if not rs:
                continue
            n = len(rs)
            rts = [r.reaction_time for r in rs if r.reaction_time is not None]
            rows.append(
                {
                    "scenario": s,
                    "planner": p,
                    "runs": n,
                    "time": float(np.mean([r.nav_time for r in rs])),
                    "distance": float(np.mean([r.path_length for r in rs])),
                    "speed": float(np.mean([r.mean_speed for r in rs])),
                    "collision_pct": 100.0 * sum(r.outcome is Outcome.COLLIDED for r in rs) / n,
                    "success_pct": 100.0 * sum(r.outcome is Outcome.REACHED for r in rs) / n,
                    "timeout_pct": 100.0 * sum(r.outcome is Outcome.TIMEOUT for r in rs) / n,
                    "reaction_time": float(np.mean(rts)) if rts else None,
                }
            )
    return rows


def format_table(rows: Sequence[dict]) -> str:
    """Render summary rows with metrics down and (scenario, planner) across."""
    if not rows:
        return ""
    heads = [f"{r['scenario']}/{r['planner']}" for r in rows]
    width = max(10, *(len(h) for h in heads))
    lines = ["".ljust(10) + "".join(h.rjust(width + 2) for h in heads)]
    for label, key, fmt in (
        ("Time", "time", "{:.2f}"),
        ("Distance", "distance", "{:.2f}"),
        ("Speed", "speed", "{:.2f}"),
        ("Collision", "collision_pct", "{:.0f}%"),
    ):
        lines.append(label.ljust(10) + "".join(fmt.format(r[key]).rjust(width + 2) for r in rows))
    return "\n".join(lines)
