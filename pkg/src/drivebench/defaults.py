"""Shared configuration defaults.

Everything in here is bench configuration, not a physical claim: wheelbase,
actuator limits, safety ranges, and weather presets are documented defaults
that scenario files and the CLI config can override.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

MAP_LABELS = ("highway", "intersection", "parkinglot")
ACTOR_CLASSES = ("car", "truck", "pedestrian", "cyclist", "cone")
WEATHER_KINDS = ("clear", "rain", "snow", "fog")
ROAD_CONDITIONS = ("dry", "wet", "icy", "pothole-marked")

# Extra traction scaling applied on top of the weather friction coefficient.
ROAD_CONDITION_FRICTION = {
    "dry": 1.0,
    "wet": 0.8,
    "icy": 0.35,
    "pothole-marked": 0.9,
}

# kind -> (visibility m, dropout probability, position noise sigma m, friction)
WEATHER_PRESETS = {
    "clear": (200.0, 0.0, 0.0, 1.0),
    "rain": (100.0, 0.1, 0.2, 0.7),
    "snow": (60.0, 0.25, 0.4, 0.45),
    "fog": (40.0, 0.4, 0.3, 0.9),
}

# Safety envelope for agent-requested controller parameters.
SAFETY_RANGES = {
    "Kp": (0.0, 3.0),
    "Ki": (0.0, 0.5),
    "Kd": (0.0, 0.5),
    "w_lat": (0.01, 5.0),
    "w_head": (0.01, 5.0),
    "c_speed": (0.0, 10.0),
}

# Reference controller parameters (also used by the rule agent as its
# neutral operating point).
DEFAULT_LONGITUDINAL = (1.1, 0.02, 0.01)  # Kp, Ki, Kd
DEFAULT_LATERAL = (0.2, 0.35, 2.0)  # w_lat, w_head, c_speed


@dataclass(frozen=True)
class VehicleParams:
    """Ego platform constants used by dynamics and both controllers."""

    wheelbase: float = 2.8  # m
    a_max: float = 3.0  # m/s^2, symmetric accel/brake authority
    delta_max: float = 0.6  # rad, steering limit
    integral_limit: float = 10.0  # anti-windup bound on the PID integral


@dataclass(frozen=True)
class ControlDefaults:
    """Horizon settings for the lateral optimizer (not agent-tunable)."""

    horizon: int = 12  # steps
    dt: float = 0.1  # s per horizon step, matches the controller tick
    terminal_weight: float = 5.0  # multiplier on the stage state cost


@dataclass(frozen=True)
class BenchConfig:
    """Top-level bench configuration, overridable from a YAML file."""

    vehicle: VehicleParams = field(default_factory=VehicleParams)
    control: ControlDefaults = field(default_factory=ControlDefaults)
    safety_ranges: dict[str, tuple[float, float]] = field(
        default_factory=lambda: dict(SAFETY_RANGES)
    )
    dynamics_hz: int = 100
    midlayer_hz: int = 10
    aggregation_window: float = 0.1  # s, freshness bound for state assembly
    fov_half_angle: float = 1.0471975511965976  # rad, 60 deg forward cone
    safety_radius: float = 2.0  # m, trajectory clearance against actors
    clearance_lookahead: float = 30.0  # m of path checked against actors
    agent_deadline_ms: float = 30000.0
    trace_memory: bool = False
    remote_endpoint: str = ""
    remote_model: str = "gpt-4"
    remote_token_env: str = "DRIVEBENCH_API_TOKEN"
    remote_max_retries: int = 1


def load_config(path: str | Path | None) -> BenchConfig:
    """Build a BenchConfig, applying overrides from a YAML file if given.

    Unknown keys are rejected so config files stay comparable across runs.
    """
    cfg = BenchConfig()
    if path is None:
        return cfg
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise ValueError(f"config file {path} must contain a mapping")
    updates: dict[str, Any] = {}
    for key, value in raw.items():
        if key == "vehicle":
            updates["vehicle"] = replace(cfg.vehicle, **value)
        elif key == "control":
            updates["control"] = replace(cfg.control, **value)
        elif key == "safety_ranges":
            ranges = dict(cfg.safety_ranges)
            for name, pair in value.items():
                if name not in ranges:
                    raise ValueError(f"unknown safety range parameter: {name}")
                ranges[name] = (float(pair[0]), float(pair[1]))
            updates["safety_ranges"] = ranges
        elif key in BenchConfig.__dataclass_fields__:
            updates[key] = value
        else:
            raise ValueError(f"unknown config key: {key}")
    return replace(cfg, **updates)
