"""Reactive planner slot: polar-image policies, the shaped reward, a
synthetic training environment and a deterministic gap-seeking policy."""

from __future__ import annotations

import enum
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Protocol

import numpy as np

from .costmap import (
    INSCRIBED,
    LETHAL,
    OccupancyGrid,
    PolarImage,
    extract_local,
    inflate_grid,
    kernel_penalty,
    to_polar,
)
from .geometry import Pose, Twist, wrap_angle
from .world import RobotState, check_collision, step_robot


class NoGoalInState(ValueError):
    pass


class StepAfterDone(RuntimeError):
    pass


class Outcome(str, enum.Enum):
    REACHED = "Reached"
    COLLIDED = "Collided"
    TIMEOUT = "Timeout"
    RUNNING = "Running"


class ReactivePolicy(Protocol):
    def act(self, state: PolarImage) -> Twist: ...


@dataclass(frozen=True)
class RewardConfig:
    r_max: float = 10.0
    goal_tolerance: float = 0.15
    kernel_radius: float = 1.0
    kernel_sigma: float = 0.5

    def __post_init__(self) -> None:
        if self.r_max <= 0 or self.goal_tolerance <= 0:
            raise ValueError("r_max and goal_tolerance must be positive")


@dataclass(frozen=True)
class Transition:
    d_old: float
    d_new: float
    theta_old: float
    theta_new: float
    collided: bool = False
    reached: bool = False
    kernel_penalty_new: float = 0.0

    def __post_init__(self) -> None:
        if self.collided and self.reached:
            raise ValueError("a transition cannot both collide and reach")


def reward(t: Transition, cfg: RewardConfig) -> float:
    """Progress in distance and bearing (regress costs double), terminal
    bonus/penalty, minus the kernel-weighted occupancy around the robot."""
    progress = t.d_old - t.d_new
    turn = abs(t.theta_old) - abs(t.theta_new)
    r = progress * (1.0 if progress >= 0 else 2.0)
    r += turn * (1.0 if turn >= 0 else 2.0)
    if t.collided:
        r -= cfg.r_max
    if t.reached:
        r += cfg.r_max
    return r - t.kernel_penalty_new


# --- built-in policy -------------------------------------------------------


@dataclass(frozen=True)
class ReactiveConfig:
    v_max: float = 0.6
    v_back: float = 0.3
    w_max: float = 1.5
    turn_gain: float = 1.5
    backoff_range: float = 0.6
    front_half_angle: float = math.pi / 6
    # half width of the lane ahead that must be free of lethal pixels (robot radius)
    lane_half_width: float = 0.2
    lookahead: float = 1.5
    slow_range: float = 1.2
    clearance_weight: float = 2.0
    # prefer openings near the current heading so the choice of side sticks
    heading_weight: float = 0.3
    smoothing_bins: int = 1
    goal_slowdown: float = 1.0


def goal_from_state(state: PolarImage) -> tuple[float, float]:
    """(bearing, range) of the goal blob centroid."""
    g = state.goal
    total = float(g.sum())
    if total <= 0:
        raise NoGoalInState("polar state has an empty goal channel")
    row_w = g.sum(axis=1)
    b = state.row_bearings
    bearing = math.atan2(float(row_w @ np.sin(b)), float(row_w @ np.cos(b)))
    rng = float(g.sum(axis=0) @ state.col_ranges) / total
    return bearing, rng


def _first_range(channel: np.ndarray, level: float, r_max: float) -> np.ndarray:
    """Per row, inner edge range of the first column at or above ``level``."""
    hit = channel >= level
    any_hit = hit.any(axis=1)
    first = np.argmax(hit, axis=1)
    return np.where(any_hit, first * r_max / channel.shape[1], r_max)


def builtin_policy(state: PolarImage, cfg: ReactiveConfig = ReactiveConfig()) -> Twist:
    """Steer toward the goal through the best-aligned open bearing.

    Free range per bearing is measured to the first inscribed pixel (robot
    centre would touch there); the back-off test uses the true obstacle
    (lethal) range in the front sector.
    """
    goal_b, goal_r = goal_from_state(state)
    rows = state.rows
    bearings = state.row_bearings
    free = _first_range(state.obstacle, (INSCRIBED - 0.5) / LETHAL, state.r_max)
    lethal = _first_range(state.obstacle, (LETHAL - 0.5) / LETHAL, state.r_max)

    k = cfg.smoothing_bins
    clr = free.copy()
    for s in range(1, k + 1):
        clr = np.minimum(clr, np.minimum(np.roll(free, s), np.roll(free, -s)))

    need = max(min(goal_r, cfg.lookahead), 1e-3)
    deficit = np.clip((need - clr) / need, 0.0, 1.0)
    align = np.abs(wrap_angle(bearings - goal_b))
    score = -align - cfg.clearance_weight * deficit - cfg.heading_weight * np.abs(bearings)

    goal_row = int(np.argmin(np.abs(wrap_angle(bearings - goal_b))))
    idx = [(goal_row + s) % rows for s in range(-k, k + 1)]
    if free[idx].min() >= need:
        heading, ahead = goal_b, float(free[idx].min())
    else:
        best = int(np.lexsort((np.abs(bearings), -score))[0])
        heading, ahead = float(bearings[best]), float(clr[best])

    w = float(np.clip(cfg.turn_gain * heading, -cfg.w_max, cfg.w_max))
    # back off only when something lethal sits in the lane straight ahead
    bins = np.abs(bearings) <= cfg.front_half_angle
    fwd = lethal[bins] * np.cos(bearings[bins])
    lat = np.abs(lethal[bins] * np.sin(bearings[bins]))
    if np.any((fwd < cfg.backoff_range) & (lat < cfg.lane_half_width)):
        return Twist(-cfg.v_back, w)
    v = cfg.v_max * min(1.0, ahead / cfg.slow_range) * max(0.0, math.cos(heading))
    v = min(v, cfg.v_max * goal_r / cfg.goal_slowdown)
    return Twist(v, w)


@dataclass
class BuiltinPolicy:
    cfg: ReactiveConfig = field(default_factory=ReactiveConfig)

    def act(self, state: PolarImage) -> Twist:
        return builtin_policy(state, self.cfg)


# --- synthetic training environment -----------------------------------------


@dataclass(frozen=True)
class EnvConfig:
    size: float = 10.0
    resolution: float = 0.05
    density: float = 0.06
    margin: float = 2.0
    robot_radius: float = 0.2
    decay_radius: float = 0.7
    goal_distance: tuple[float, float] = (1.0, 2.5)
    step_budget: int = 100
    control_period: float = 0.2
    substep: float = 0.02
    local_side: float = 6.0
    polar_rows: int = 64
    polar_cols: int = 64
    reward: RewardConfig = field(default_factory=RewardConfig)


@dataclass
class StepResult:
    state: PolarImage
    reward: float
    done: bool
    outcome: Outcome
    transition: Transition


def state_hash(img: PolarImage) -> str:
    return hashlib.sha256(img.stacked().tobytes()).hexdigest()[:16]


def random_obstacle_map(rng: np.random.Generator, cfg: EnvConfig) -> OccupancyGrid:
    """Scattered discs and axis-aligned boxes inside the inner area."""
    n = int(round(cfg.size / cfg.resolution))
    cells = np.zeros((n, n), dtype=np.uint8)
    inner = cfg.size - 2 * cfg.margin
    count = rng.poisson(cfg.density * inner * inner) if cfg.density > 0 else 0
    centers = (np.arange(n) + 0.5) * cfg.resolution
    X, Y = np.meshgrid(centers, centers)
    for _ in range(count):
        cx, cy = cfg.margin + rng.uniform(0, inner, size=2)
        if rng.uniform() < 0.5:
            r = rng.uniform(0.15, 0.5)
            cells[(X - cx) ** 2 + (Y - cy) ** 2 <= r * r] = LETHAL
        else:
            hw, hh = rng.uniform(0.1, 0.5, size=2)
            cells[(np.abs(X - cx) <= hw) & (np.abs(Y - cy) <= hh)] = LETHAL
    return OccupancyGrid(cfg.resolution, Pose(0.0, 0.0, 0.0), cells)


class EpisodeEnv:
    """Dummy environment: a random obstacle map, a start and one waypoint goal.

    Not thread-safe; use one instance per worker.
    """

    def __init__(self, cfg: EnvConfig | None = None, record: bool = False):
        self.cfg = cfg or EnvConfig()
        self.record = record
        self.records: list[dict] = []
        self.done = True
        self.grid: OccupancyGrid | None = None
        self.inflated: OccupancyGrid | None = None
        self.robot: RobotState | None = None
        self.goal: Pose | None = None
        self.steps = 0
        self._state: PolarImage | None = None

    def _free(self, x: float, y: float) -> bool:
        v = self.inflated.value_at(np.array([x]), np.array([y]))[0]
        return v < INSCRIBED

    def reset(self, seed: int) -> PolarImage:
        cfg = self.cfg
        rng = np.random.default_rng(seed)
        self.grid = random_obstacle_map(rng, cfg)
        self.inflated = inflate_grid(self.grid, cfg.robot_radius, cfg.decay_radius)
        inner = cfg.size - 2 * cfg.margin
        while True:
            sx, sy = cfg.margin + rng.uniform(0, inner, size=2)
            if not self._free(sx, sy):
                continue
            d = rng.uniform(*cfg.goal_distance)
            a = rng.uniform(-math.pi, math.pi)
            gx, gy = sx + d * math.cos(a), sy + d * math.sin(a)
            if self._free(gx, gy):
                break
        self.robot = RobotState(Pose(sx, sy, rng.uniform(-math.pi, math.pi)))
        self.goal = Pose(gx, gy, 0.0)
        self.steps = 0
        self.done = False
        self._state = self._observe()
        return self._state

    def _local(self):
        cfg = self.cfg
        return extract_local(self.inflated, self.robot.pose, cfg.local_side, cfg.resolution)

    def _observe(self) -> PolarImage:
        cfg = self.cfg
        local = self._local()
        goal = self.goal
        if not local.contains(goal.x, goal.y):
            # keep the bearing, pull the blob just inside the window
            p = self.robot.pose
            a = math.atan2(goal.y - p.y, goal.x - p.x)
            r = cfg.local_side / 2 - cfg.resolution
            goal = Pose(p.x + r * math.cos(a), p.y + r * math.sin(a))
        return to_polar(local, goal, cfg.polar_rows, cfg.polar_cols)

    def _kernel(self) -> float:
        cfg = self.cfg
        raw = extract_local(self.grid, self.robot.pose, 2 * cfg.reward.kernel_radius + 4 * cfg.resolution, cfg.resolution)
        return kernel_penalty(raw, cfg.reward.kernel_radius, cfg.reward.kernel_sigma)

    def step(self, action: Twist) -> StepResult:
        if self.done:
            raise StepAfterDone("episode already finished; call reset()")
        cfg = self.cfg
        tol = cfg.reward.goal_tolerance
        before = self.robot.pose
        d_old = before.distance_to(self.goal)
        th_old = before.bearing_to(self.goal.x, self.goal.y)
        collided = reached = False
        n_sub = max(int(round(cfg.control_period / cfg.substep)), 1)
        for _ in range(n_sub):
            self.robot = step_robot(self.robot, action, cfg.control_period / n_sub)
            if check_collision(self.robot.pose, self.grid, (), cfg.robot_radius):
                collided = True
                break
            if self.robot.pose.distance_to(self.goal) <= tol:
                reached = True
                break
        self.steps += 1
        after = self.robot.pose
        tr = Transition(
            d_old,
            after.distance_to(self.goal),
            th_old,
            after.bearing_to(self.goal.x, self.goal.y),
            collided,
            reached,
            self._kernel(),
        )
        r = reward(tr, cfg.reward)
        if collided:
            outcome = Outcome.COLLIDED
        elif reached:
            outcome = Outcome.REACHED
        elif self.steps >= cfg.step_budget:
            outcome = Outcome.TIMEOUT
        else:
            outcome = Outcome.RUNNING
        self.done = outcome is not Outcome.RUNNING
        if self.record:
            self.records.append(
                {"state": state_hash(self._state), "action": action.to_list(), "reward": r, "outcome": outcome.value}
            )
        self._state = self._observe()
        return StepResult(self._state, r, self.done, outcome, tr)


def env_reset(env: EpisodeEnv, seed: int) -> PolarImage:
    return env.reset(seed)


def env_step(env: EpisodeEnv, action: Twist) -> tuple[PolarImage, float, bool, Outcome]:
    res = env.step(action)
    return res.state, res.reward, res.done, res.outcome


def run_env_episode(env: EpisodeEnv, policy: ReactivePolicy, seed: int) -> tuple[Outcome, float]:
    state = env.reset(seed)
    total = 0.0
    while True:
        res = env.step(policy.act(state))
        total += res.reward
        if res.done:
            return res.outcome, total
        state = res.state


def export_transitions(records: Iterable[dict], path: str | Path) -> Path:
    """Write transition records as JSON lines."""
    path = Path(path)
    with path.open("w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path
