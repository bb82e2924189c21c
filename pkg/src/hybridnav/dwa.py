"""Dynamic Window Approach: sample reachable (v, w), roll each out as a single
arc, score it, keep the cheapest feasible one."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .costmap import INSCRIBED, LETHAL, LocalCostmap
from .geometry import Pose, Twist, integrate_arc
from .global_planner import WaypointSet
from .world import RobotState

INFEASIBLE = math.inf


@dataclass(frozen=True)
class DwaWeights:
    goal_dist: float = 1.0
    path_dist: float = 0.8
    obstacle: float = 2.0
    twirl: float = 0.1

    def scaled(self, k: float) -> "DwaWeights":
        return DwaWeights(self.goal_dist * k, self.path_dist * k, self.obstacle * k, self.twirl * k)


@dataclass(frozen=True)
class DwaConfig:
    v_min: float = -0.5
    v_max: float = 1.0
    w_max: float = 1.5
    a_v: float = 1.0
    a_w: float = 2.0
    sim_time: float = 1.5
    sim_step: float = 0.05
    control_period: float = 0.2
    v_samples: int = 11
    w_samples: int = 21
    weights: DwaWeights = field(default_factory=DwaWeights)

    def __post_init__(self) -> None:
        if not self.v_min <= 0 <= self.v_max:
            raise ValueError("need v_min <= 0 <= v_max")
        if self.sim_time <= self.control_period:
            raise ValueError("sim_time must exceed the control period")
        if self.v_samples < 3 or self.w_samples < 3:
            raise ValueError("need at least 3 samples per axis")
        if self.sim_step > self.sim_time:
            raise ValueError("sim_step must not exceed sim_time")
        w = self.weights
        if min(w.goal_dist, w.path_dist, w.obstacle, w.twirl) < 0:
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class ArcTrajectory:
    command: Twist
    poses: np.ndarray  # (k, 3) x, y, theta at step, 2*step, ..., sim_time

    @property
    def terminal(self) -> Pose:
        x, y, th = self.poses[-1]
        return Pose(x, y, th)


@dataclass
class DwaResult:
    command: Twist
    cost: float
    all_infeasible: bool
    candidates: list[tuple[float, float, float]] | None = None


def dynamic_window(current: Twist, cfg: DwaConfig, dt: float) -> tuple[tuple[float, float], tuple[float, float]]:
    """Velocities reachable within ``dt`` under the acceleration limits."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    v_lo = max(cfg.v_min, current.v - cfg.a_v * dt)
    v_hi = min(cfg.v_max, current.v + cfg.a_v * dt)
    w_lo = max(-cfg.w_max, current.w - cfg.a_w * dt)
    w_hi = min(cfg.w_max, current.w + cfg.a_w * dt)
    # a current twist outside the limits still yields a non-empty box
    v_lo, v_hi = min(v_lo, v_hi), max(v_lo, v_hi)
    w_lo, w_hi = min(w_lo, w_hi), max(w_lo, w_hi)
    return (v_lo, v_hi), (w_lo, w_hi)


def _rollout_times(sim_time: float, step: float) -> np.ndarray:
    k = max(int(round(sim_time / step)), 1)
    return np.linspace(sim_time / k, sim_time, k)


def simulate_arc(pose: Pose, cmd: Twist, sim_time: float, step: float) -> ArcTrajectory:
    if step > sim_time:
        raise ValueError("step must not exceed sim_time")
    t = _rollout_times(sim_time, step)
    x, y, th = integrate_arc(pose.x, pose.y, pose.theta, cmd.v, cmd.w, t)
    return ArcTrajectory(cmd, np.stack([x, y, th], axis=1))


def _costs(xs, ys, ws, costmap: LocalCostmap, wp_points: np.ndarray, goal: Pose, weights: DwaWeights) -> np.ndarray:
    """Cost per rollout; ``xs``/``ys`` are (candidates, steps)."""
    cells = costmap.lookup(xs, ys)
    feasible = (cells < INSCRIBED).all(axis=1)
    tx, ty = xs[:, -1], ys[:, -1]
    goal_term = np.hypot(tx - goal.x, ty - goal.y)
    path_term = np.hypot(tx[:, None] - wp_points[None, :, 0], ty[:, None] - wp_points[None, :, 1]).min(axis=1)
    obstacle_term = cells.max(axis=1).astype(float) / LETHAL
    cost = (
        weights.goal_dist * goal_term
        + weights.path_dist * path_term
        + weights.obstacle * obstacle_term
        + weights.twirl * np.abs(ws)
    )
    return np.where(feasible, cost, INFEASIBLE)


def score(traj: ArcTrajectory, costmap: LocalCostmap, wps: WaypointSet, goal: Pose, cfg: DwaConfig) -> float:
    """Weighted goal/path/obstacle/twirl cost, or ``INFEASIBLE`` on contact."""
    if len(traj.poses) == 0:
        raise ValueError("empty trajectory")
    xs = traj.poses[None, :, 0]
    ys = traj.poses[None, :, 1]
    return float(_costs(xs, ys, np.array([traj.command.w]), costmap, wps.points, goal, cfg.weights)[0])


def lattice(window: tuple[tuple[float, float], tuple[float, float]], cfg: DwaConfig) -> tuple[np.ndarray, np.ndarray]:
    (v_lo, v_hi), (w_lo, w_hi) = window
    vv, ww = np.meshgrid(np.linspace(v_lo, v_hi, cfg.v_samples), np.linspace(w_lo, w_hi, cfg.w_samples), indexing="ij")
    return vv.ravel(), ww.ravel()


def plan(
    current: RobotState,
    costmap: LocalCostmap,
    wps: WaypointSet,
    goal: Pose,
    cfg: DwaConfig,
    debug: bool = False,
) -> DwaResult:
    """Cheapest feasible lattice command over the dynamic window.

    Ties go to lower |w|, then higher v, then lattice order. With no feasible
    candidate the result is a spin-in-place recovery at half the turn limit.
    """
    if len(wps) == 0:
        raise ValueError("no waypoints")
    vs, ws = lattice(dynamic_window(current.twist, cfg, cfg.control_period), cfg)
    t = _rollout_times(cfg.sim_time, cfg.sim_step)
    p = current.pose
    xs, ys, _ = integrate_arc(p.x, p.y, p.theta, vs[:, None], ws[:, None], t[None, :])
    costs = _costs(xs, ys, ws, costmap, wps.points, goal, cfg.weights)
    candidates = list(zip(vs.tolist(), ws.tolist(), costs.tolist())) if debug else None
    if not np.isfinite(costs).any():
        return DwaResult(Twist(0.0, cfg.w_max / 2.0), INFEASIBLE, True, candidates)
    order = np.lexsort((np.arange(len(vs)), -vs, np.abs(ws), costs))
    best = int(order[0])
    return DwaResult(Twist(vs[best], ws[best]), float(costs[best]), False, candidates)


def arc_max_cost(pose: Pose, cmd: Twist, costmap: LocalCostmap, cfg: DwaConfig) -> int:
    """Highest cell cost touched by the rollout of ``cmd`` (used for audits)."""
    traj = simulate_arc(pose, cmd, cfg.sim_time, cfg.sim_step)
    return int(costmap.lookup(traj.poses[:, 0], traj.poses[:, 1]).max())
