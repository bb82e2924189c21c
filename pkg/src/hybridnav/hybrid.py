"""Clearance-switched hybrid local planner.

Every tick both constituent planners see the same local snapshot. The
waypoint path is rasterised and checked against the inflated costmap, the
status goes through a short history filter, and the filtered decision picks
whose command is published.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import dwa
from .config import StackConfig
from .costmap import INSCRIBED, LocalCostmap, PolarImage, extract_local, inflate, to_polar
from .geometry import Pose, Twist
from .global_planner import GlobalPlan, PlanTracker, WaypointSet, downsample_waypoints, select_goal_waypoint
from .reactive import BuiltinPolicy, ReactivePolicy
from .world import ObservedGrid, RobotState

_EPS = 1e-9


class ClearanceStatus(str, enum.Enum):
    CLEAR = "Clear"
    BLOCKED = "Blocked"


class Selected(str, enum.Enum):
    DWA = "dwa"
    REACTIVE = "reactive"


def _segment_distance(px: np.ndarray, py: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    L2 = float(d @ d)
    if L2 == 0.0:
        return np.hypot(px - a[0], py - a[1])
    t = np.clip(((px - a[0]) * d[0] + (py - a[1]) * d[1]) / L2, 0.0, 1.0)
    return np.hypot(px - (a[0] + t * d[0]), py - (a[1] + t * d[1]))


def rasterize_waypoint_path(
    wps: WaypointSet,
    costmap: LocalCostmap,
    robot_radius: float,
    origin: np.ndarray | None = None,
) -> np.ndarray:
    """Boolean mask of cells swept by the robot disc along robot -> wp0 -> ... -> wpN.

    A cell belongs to the band when its centre is strictly closer than
    ``robot_radius`` to the polyline.
    """
    if len(wps) < 2:
        raise ValueError("need at least two waypoints")
    start = costmap.center.xy if origin is None else np.asarray(origin, dtype=float)
    chain = np.vstack([start[None, :], wps.points])
    n = costmap.grid.width
    h = costmap.half_cells
    res = costmap.resolution
    mask = np.zeros((n, n), dtype=bool)
    cx, cy = costmap.center.x, costmap.center.y
    pad = int(np.ceil(robot_radius / res)) + 1
    for a, b in zip(chain[:-1], chain[1:]):
        lo = np.floor((np.minimum(a, b) - (cx, cy)) / res).astype(int) + h - pad
        hi = np.ceil((np.maximum(a, b) - (cx, cy)) / res).astype(int) + h + pad
        c0, r0 = np.maximum(lo, 0)
        c1, r1 = np.minimum(hi, n - 1)
        if c0 > c1 or r0 > r1:
            continue
        cols = np.arange(c0, c1 + 1)
        rows = np.arange(r0, r1 + 1)
        px = cx + (cols[None, :] - h) * res
        py = cy + (rows[:, None] - h) * res
        px, py = np.broadcast_arrays(px, py)
        inside = _segment_distance(px, py, a, b) < robot_radius - _EPS
        mask[r0 : r1 + 1, c0 : c1 + 1] |= inside
    return mask


def detect_clearance(
    costmap: LocalCostmap,
    wps: WaypointSet,
    robot_radius: float,
    block_threshold: int = INSCRIBED,
) -> ClearanceStatus:
    """Blocked when any swept cell (unknown included) reaches ``block_threshold``."""
    band = rasterize_waypoint_path(wps, costmap, robot_radius)
    if np.any(costmap.cells[band] >= block_threshold):
        return ClearanceStatus.BLOCKED
    return ClearanceStatus.CLEAR


@dataclass
class ClearanceFilter:
    """Sliding window over the last ``n`` statuses.

    The blocked likelihood is the blocked count over ``n``, so slots not yet
    filled count as clear; the decision is Blocked once it reaches ``tau``.
    """

    n: int = 3
    tau: float = 1.0
    window: deque = field(default_factory=deque)

    def __post_init__(self) -> None:
        if self.n < 1 or not (0 < self.tau <= 1):
            raise ValueError("need n >= 1 and tau in (0, 1]")
        self.window = deque(self.window, maxlen=self.n)

    def likelihood(self) -> float:
        return sum(s is ClearanceStatus.BLOCKED for s in self.window) / self.n

    def decision(self) -> ClearanceStatus:
        return ClearanceStatus.BLOCKED if self.likelihood() >= self.tau - _EPS else ClearanceStatus.CLEAR

    def update(self, s: ClearanceStatus) -> ClearanceStatus:
        self.window.append(ClearanceStatus(s))
        return self.decision()


def filter_update(f: ClearanceFilter, s: ClearanceStatus) -> ClearanceStatus:
    return f.update(s)


@dataclass
class HybridDecision:
    command: Twist
    selected: Selected
    clearance: ClearanceStatus
    filter_fill: int
    filter_window: list[str] = field(default_factory=list)
    fallthrough: bool = False


@dataclass
class LocalView:
    """Everything both planners consume for one tick."""

    raw: LocalCostmap
    costmap: LocalCostmap
    waypoints: WaypointSet
    local_goal: Pose
    reactive_goal: Pose
    degraded: bool
    polar: PolarImage


@dataclass
class TickOutput:
    decision: HybridDecision
    view: LocalView
    dwa_result: dwa.DwaResult
    reactive_command: Twist
    clearance: ClearanceStatus


def reactive_goal(wps: WaypointSet, pose: Pose, min_lookahead: float) -> tuple[Pose, bool]:
    """Goal for the reactive planner, skipping waypoints closer than ``min_lookahead``.

    Waypoint 0 sits on the robot's projection onto the plan, which would give
    the policy a goal under its own wheels.
    """
    d = np.hypot(wps.points[:, 0] - pose.x, wps.points[:, 1] - pose.y)
    ahead = np.flatnonzero(d >= min_lookahead)
    if ahead.size == 0:
        ahead = np.array([len(wps) - 1])
    first = int(ahead[0])
    sub = WaypointSet(wps.points[first:], wps.headings[first:], wps.on_obstacle[first:])
    return select_goal_waypoint(sub)


class LocalStack:
    """Per-tick perception shared by the DWA, reactive and hybrid planners."""

    def __init__(self, plan: GlobalPlan, cfg: StackConfig):
        self.plan = plan
        self.cfg = cfg
        self.tracker = PlanTracker(plan, cfg.waypoints.track_horizon)

    def view(self, state: RobotState, observed: ObservedGrid) -> LocalView:
        c = self.cfg
        pose = state.pose
        raw = extract_local(observed.grid, pose, c.costmap.side_length, c.costmap.resolution)
        costmap = inflate(raw, c.robot.radius, c.costmap.decay_radius)
        idx = self.tracker.update(pose)
        wps = downsample_waypoints(self.plan, costmap, c.waypoints.count, idx, idx)
        goal, degraded = reactive_goal(wps, pose, c.waypoints.reactive_lookahead)
        polar = to_polar(costmap, goal, c.costmap.polar_rows, c.costmap.polar_cols)
        return LocalView(raw, costmap, wps, wps.pose(len(wps) - 1), goal, degraded, polar)

    def dwa_command(self, state: RobotState, view: LocalView) -> dwa.DwaResult:
        return dwa.plan(state, view.costmap, view.waypoints, view.local_goal, self.cfg.dwa)


class HybridPlanner:
    """Runs both planners every tick and publishes the filtered choice."""

    def __init__(self, plan: GlobalPlan, cfg: StackConfig, policy: ReactivePolicy | None = None):
        self.stack = LocalStack(plan, cfg)
        self.cfg = cfg
        self.policy = policy or BuiltinPolicy(cfg.reactive)
        self.filter = ClearanceFilter(cfg.hybrid.n, cfg.hybrid.tau)

    def step(self, state: RobotState, observed: ObservedGrid) -> TickOutput:
        view = self.stack.view(state, observed)
        d = self.stack.dwa_command(state, view)
        r = self.policy.act(view.polar)
        status = detect_clearance(view.costmap, view.waypoints, self.cfg.robot.radius, self.cfg.hybrid.block_threshold)
        filtered = self.filter.update(status)
        fallthrough = False
        if filtered is ClearanceStatus.BLOCKED:
            selected, cmd = Selected.REACTIVE, r
        elif d.all_infeasible:
            selected, cmd, fallthrough = Selected.REACTIVE, r, True
        else:
            selected, cmd = Selected.DWA, d.command
        decision = HybridDecision(
            cmd,
            selected,
            status,
            len(self.filter.window),
            [s.value for s in self.filter.window],
            fallthrough,
        )
        return TickOutput(decision, view, d, r, status)


def hybrid_plan(planner: HybridPlanner, state: RobotState, observed: ObservedGrid) -> HybridDecision:
    return planner.step(state, observed).decision
