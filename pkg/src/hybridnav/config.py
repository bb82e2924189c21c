"""Tunable parameters for the whole local-planning stack, with dotted-key overrides."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Any, Mapping

from .costmap import INSCRIBED
from .dwa import DwaConfig
from .reactive import ReactiveConfig
from .world import SensorModel


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RobotConfig:
    radius: float = 0.2


@dataclass(frozen=True)
class CostmapConfig:
    side_length: float = 6.0
    resolution: float = 0.05
    decay_radius: float = 0.7
    polar_rows: int = 64
    polar_cols: int = 64
    # global planning costmap
    plan_decay_radius: float = 1.2


@dataclass(frozen=True)
class WaypointConfig:
    count: int = 8
    track_horizon: float = 1.5
    reactive_lookahead: float = 1.0


@dataclass(frozen=True)
class HybridConfig:
    n: int = 3
    tau: float = 1.0
    block_threshold: int = INSCRIBED


@dataclass(frozen=True)
class SimConfig:
    control_period: float = 0.2
    substep: float = 0.02


@dataclass(frozen=True)
class StackConfig:
    robot: RobotConfig = field(default_factory=RobotConfig)
    costmap: CostmapConfig = field(default_factory=CostmapConfig)
    waypoints: WaypointConfig = field(default_factory=WaypointConfig)
    dwa: DwaConfig = field(default_factory=DwaConfig)
    reactive: ReactiveConfig = field(default_factory=ReactiveConfig)
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    sensor: SensorModel | None = None


def _coerce(raw: Any, current: Any, key: str) -> Any:
    if not isinstance(raw, str):
        return raw
    try:
        if isinstance(current, bool):
            if raw.lower() in ("1", "true", "yes"):
                return True
            if raw.lower() in ("0", "false", "no"):
                return False
            raise ValueError(raw)
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def _replace_path(obj: Any, parts: list[str], raw: Any, key: str) -> Any:
    if not dataclasses.is_dataclass(obj):
        raise ConfigError(f"unknown config key: {key}")
    names = {f.name for f in dataclasses.fields(obj)}
    head = parts[0]
    if head not in names:
        raise ConfigError(f"unknown config key: {key}")
    current = getattr(obj, head)
    if len(parts) == 1:
        if dataclasses.is_dataclass(current):
            raise ConfigError(f"config key {key} names a section, not a value")
        value = _coerce(raw, current, key)
    else:
        value = _replace_path(current, parts[1:], raw, key)
    try:
        return dataclasses.replace(obj, **{head: value})
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from None


def apply_overrides(cfg: StackConfig, overrides: Mapping[str, Any]) -> StackConfig:
    """Return ``cfg`` with ``section.field[.field]=value`` overrides applied.

    ``sensor.*`` keys are accepted even when no sensor override exists yet;
    they start from the default sensor model.
    """
    for key, raw in overrides.items():
        parts = key.split(".")
        if parts[0] == "sensor" and cfg.sensor is None:
            cfg = dataclasses.replace(cfg, sensor=SensorModel())
        cfg = _replace_path(cfg, parts, raw, key)
    return cfg


def known_keys(cfg: StackConfig | None = None) -> list[str]:
    cfg = cfg or dataclasses.replace(StackConfig(), sensor=SensorModel())
    out = []

    def walk(obj, prefix):
        for f in dataclasses.fields(obj):
            v = getattr(obj, f.name)
            if dataclasses.is_dataclass(v):
                walk(v, prefix + f.name + ".")
            else:
                out.append(prefix + f.name)

    walk(cfg, "")
    return out


def to_dict(cfg: StackConfig) -> dict:
    return dataclasses.asdict(cfg)
