"""Planar pose/twist value types and the closed-form unicycle integrator.

Everything that moves a robot along an arc (the simulator and the DWA
forward simulation) goes through :func:`integrate_arc`, so the two can never
disagree about where a constant command leads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Below this angular rate a command is integrated as a straight segment.
STRAIGHT_EPS = 1e-6


def wrap_angle(theta):
    """Map an angle (scalar or array) into (-pi, pi]."""
    if isinstance(theta, np.ndarray):
        return math.pi - np.mod(math.pi - theta, 2.0 * math.pi)
    return math.pi - math.fmod(math.fmod(math.pi - theta, 2.0 * math.pi) + 2.0 * math.pi, 2.0 * math.pi)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", float(wrap_angle(float(self.theta))))

    @property
    def xy(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance_to(self, other: "Pose") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)

    def bearing_to(self, x: float, y: float) -> float:
        """Bearing of a world point in this pose's frame, in (-pi, pi]."""
        return wrap_angle(math.atan2(y - self.y, x - self.x) - self.theta)

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.theta]


@dataclass(frozen=True)
class Twist:
    v: float = 0.0
    w: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "v", float(self.v))
        object.__setattr__(self, "w", float(self.w))

    def clamped(self, v_max_abs: float, w_max_abs: float) -> "Twist":
        return Twist(min(max(self.v, -v_max_abs), v_max_abs), min(max(self.w, -w_max_abs), w_max_abs))

    def to_list(self) -> list[float]:
        return [self.v, self.w]


def integrate_arc(x, y, theta, v, w, t):
    """Exact pose after driving (v, w) for time ``t`` from (x, y, theta).

    Works elementwise on scalars or broadcastable numpy arrays. The returned
    heading is *not* wrapped so that arrays of rollouts stay continuous.
    """
    x, y, theta, v, w, t = (np.asarray(a, dtype=float) for a in (x, y, theta, v, w, t))
    straight = np.abs(w) < STRAIGHT_EPS
    w_safe = np.where(straight, 1.0, w)
    th_new = theta + w * t
    r = v / w_safe
    vt = v * t
    nx = np.where(straight, x + vt * np.cos(theta), x + r * (np.sin(th_new) - np.sin(theta)))
    ny = np.where(straight, y + vt * np.sin(theta), y - r * (np.cos(th_new) - np.cos(theta)))
    th_new = np.where(straight, theta, th_new)
    shape = np.broadcast_shapes(x.shape, y.shape, theta.shape, v.shape, w.shape, t.shape)
    if nx.shape != shape:
        nx, ny, th_new = (np.broadcast_to(a, shape) for a in (nx, ny, th_new))
    return nx, ny, th_new


def advance(pose: Pose, cmd: Twist, dt: float) -> Pose:
    """Scalar twin of :func:`integrate_arc` (same formulas, no numpy overhead)."""
    x, y, th, v, w = pose.x, pose.y, pose.theta, cmd.v, cmd.w
    if abs(w) < STRAIGHT_EPS:
        return Pose(x + v * dt * math.cos(th), y + v * dt * math.sin(th), th)
    th_new = th + w * dt
    return Pose(
        x + (v / w) * (math.sin(th_new) - math.sin(th)),
        y - (v / w) * (math.cos(th_new) - math.cos(th)),
        th_new,
    )
