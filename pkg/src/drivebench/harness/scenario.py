"""Declarative scenario files.

A scenario varies four things: road geometry, road condition, weather, and
traffic participants, plus the passenger command timeline and run controls
(cadence, duration, seed). Files are versioned YAML with a fail-closed
schema: unknown fields are rejected so runs stay comparable. Trajectory
libraries are resolved relative to the scenario file and inlined into the
loaded spec, which makes run logs self-contained for replay.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from drivebench.autonomy.trajectory import (
    Trajectory,
    TrajectoryLibrary,
    load_trajectory_library,
)
from drivebench.defaults import MAP_LABELS, ROAD_CONDITIONS, WEATHER_PRESETS
from drivebench.simworld import Actor, EgoState, Pose, ScriptSegment, Weather

SCHEMA_VERSION = 1

_TOP_KEYS = {
    "schema_version",
    "name",
    "map_label",
    "road",
    "road_condition",
    "weather",
    "ego_start",
    "actors",
    "commands",
    "trajectories",
    "cadence",
    "duration",
    "seed",
    "localization_noise",
    "expected",
}


class ScenarioError(ValueError):
    """A scenario file failed to parse or violated an invariant."""


@dataclass(frozen=True)
class Road:
    """Polyline centerline with a lane count and lane width.

    The centerline is the reference lane; other lanes sit at integer
    multiples of lane_width to its left/right, symmetrically.
    """

    centerline: tuple[tuple[float, float], ...]
    lanes: int
    lane_width: float

    def __post_init__(self) -> None:
        if len(self.centerline) < 2:
            raise ScenarioError("road centerline needs >= 2 points")
        if self.lanes < 1 or self.lane_width <= 0:
            raise ScenarioError("road needs lanes >= 1 and lane_width > 0")

    def project(self, x: float, y: float) -> tuple[float, float, float, float]:
        """Project a point onto the centerline.

        Returns (station, heading, cx, cy): arc length along the polyline,
        the tangent heading there, and the closest centerline point.
        """
        pts = np.asarray(self.centerline)
        x1, y1 = pts[:-1, 0], pts[:-1, 1]
        x2, y2 = pts[1:, 0], pts[1:, 1]
        dx, dy = x2 - x1, y2 - y1
        length2 = dx * dx + dy * dy
        t = np.clip(((x - x1) * dx + (y - y1) * dy) / length2, 0.0, 1.0)
        px, py = x1 + t * dx, y1 + t * dy
        d2 = (x - px) ** 2 + (y - py) ** 2
        i = int(np.argmin(d2))
        seg_len = np.sqrt(length2)
        station = float(np.sum(seg_len[:i]) + t[i] * seg_len[i])
        heading = math.atan2(dy[i], dx[i])
        return station, heading, float(px[i]), float(py[i])

    def lane_anchor(self, pose: Pose) -> Pose:
        """Road-aligned anchor at the pose's station, snapped to a lane center.

        Maneuver trajectories are expressed relative to the current lane;
        anchoring at the nearest lane keeps candidates meaningful while a
        maneuver (e.g. a lane change) is in progress.
        """
        _, heading, cx, cy = self.project(pose.x, pose.y)
        nx, ny = -math.sin(heading), math.cos(heading)
        offset = (pose.x - cx) * nx + (pose.y - cy) * ny
        half_span = (self.lanes - 1) // 2
        lane = int(round(offset / self.lane_width))
        lane = max(-half_span, min(half_span, lane))
        shift = lane * self.lane_width
        return Pose(cx + shift * nx, cy + shift * ny, heading)


@dataclass(frozen=True)
class CommandEvent:
    t: float
    text: str


@dataclass(frozen=True)
class Expectation:
    """An expected decision inside a time window, for the accuracy oracle.

    `params` maps parameter names to a direction relative to the neutral
    defaults: "up" (strictly above) or "down" (strictly below).
    """

    t_from: float
    t_to: float
    behavior: str
    params: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    map_label: str
    road: Road
    road_condition: str
    weather: Weather
    ego_start: EgoState
    actors: tuple[Actor, ...]
    commands: tuple[CommandEvent, ...]
    library: TrajectoryLibrary
    cadence: float
    duration: float
    seed: int
    localization_noise: tuple[float, float, float]
    expected: tuple[Expectation, ...]
    record: dict

    def to_record(self) -> dict:
        """The resolved, self-contained scenario as plain data."""
        return self.record


def _require(raw: dict, key: str, path: str):
    if key not in raw:
        raise ScenarioError(f"{path}: missing field {key!r}")
    return raw[key]


def _check_keys(raw: dict, allowed: set[str], context: str, path: str) -> None:
    unknown = set(raw) - allowed
    if unknown:
        raise ScenarioError(f"{path}: unknown {context} field(s): {sorted(unknown)}")


def _resolve_weather(raw, path: str) -> dict:
    if isinstance(raw, str):
        if raw not in WEATHER_PRESETS:
            raise ScenarioError(f"{path}: unknown weather preset {raw!r}")
        visibility, dropout_p, sigma, friction = WEATHER_PRESETS[raw]
        return {
            "kind": raw,
            "visibility": visibility,
            "dropout_p": dropout_p,
            "pos_noise_sigma": sigma,
            "friction": friction,
        }
    if isinstance(raw, dict):
        allowed = {"kind", "visibility", "dropout_p", "pos_noise_sigma", "friction"}
        _check_keys(raw, allowed, "weather", path)
        kind = _require(raw, "kind", path)
        base = _resolve_weather(kind, path)
        base.update(raw)
        return base
    raise ScenarioError(f"{path}: weather must be a preset name or a mapping")


def _build_actor(raw: dict, path: str) -> Actor:
    allowed = {"id", "class", "x", "y", "psi", "v", "script"}
    _check_keys(raw, allowed, "actor", path)
    script = tuple(
        ScriptSegment(t=float(seg["t"]), v=float(seg["v"]), psi=float(seg["psi"]))
        for seg in raw.get("script", [])
    )
    return Actor(
        actor_id=str(_require(raw, "id", path)),
        cls=_require(raw, "class", path),
        pose=Pose(float(raw.get("x", 0.0)), float(raw.get("y", 0.0)), float(raw.get("psi", 0.0))),
        v=float(raw.get("v", 0.0)),
        script=script,
    )


def _build_spec(resolved: dict, path: str) -> ScenarioSpec:
    """Construct a spec from a resolved (library-inlined) scenario mapping."""
    _check_keys(resolved, _TOP_KEYS, "scenario", path)
    if resolved.get("schema_version") != SCHEMA_VERSION:
        raise ScenarioError(
            f"{path}: schema_version must be {SCHEMA_VERSION}, "
            f"got {resolved.get('schema_version')!r}"
        )
    name = str(_require(resolved, "name", path))
    map_label = _require(resolved, "map_label", path)
    if map_label not in MAP_LABELS:
        raise ScenarioError(f"{path}: map_label must be one of {MAP_LABELS}")

    road_raw = _require(resolved, "road", path)
    _check_keys(road_raw, {"centerline", "lanes", "lane_width"}, "road", path)
    road = Road(
        centerline=tuple((float(p[0]), float(p[1])) for p in road_raw["centerline"]),
        lanes=int(road_raw["lanes"]),
        lane_width=float(road_raw["lane_width"]),
    )

    condition = resolved.get("road_condition", "dry")
    if condition not in ROAD_CONDITIONS:
        raise ScenarioError(f"{path}: road_condition must be one of {ROAD_CONDITIONS}")

    try:
        weather = Weather(**_resolve_weather(_require(resolved, "weather", path), path))
    except ValueError as exc:
        raise ScenarioError(f"{path}: weather: {exc}") from exc

    ego_raw = _require(resolved, "ego_start", path)
    _check_keys(ego_raw, {"x", "y", "psi", "v"}, "ego_start", path)
    ego = EgoState(
        pose=Pose(float(ego_raw["x"]), float(ego_raw["y"]), float(ego_raw.get("psi", 0.0))),
        v=float(ego_raw.get("v", 0.0)),
    )

    try:
        actors = tuple(_build_actor(a, path) for a in resolved.get("actors", []))
    except ValueError as exc:
        raise ScenarioError(f"{path}: actor: {exc}") from exc

    duration = float(_require(resolved, "duration", path))
    cadence = float(resolved.get("cadence", 3.0))
    if duration <= 0:
        raise ScenarioError(f"{path}: duration must be positive")
    if cadence <= 0:
        raise ScenarioError(f"{path}: cadence must be positive")

    commands = []
    for raw_cmd in resolved.get("commands", []):
        _check_keys(raw_cmd, {"t", "text"}, "command", path)
        event = CommandEvent(t=float(raw_cmd["t"]), text=str(raw_cmd["text"]))
        if not 0.0 <= event.t <= duration:
            raise ScenarioError(
                f"{path}: command at t={event.t} outside [0, {duration}]"
            )
        commands.append(event)
    commands.sort(key=lambda e: e.t)

    trajectories = _require(resolved, "trajectories", path)
    if not isinstance(trajectories, dict) or "trajectories" not in trajectories:
        raise ScenarioError(f"{path}: trajectories must be inlined records after resolve")
    try:
        entries: dict[str, list[Trajectory]] = {}
        for record in trajectories["trajectories"]:
            entries.setdefault(record["map_label"], []).append(
                Trajectory.from_waypoints(
                    record["behavior_id"],
                    [tuple(row) for row in record["waypoints"]],
                )
            )
        library = TrajectoryLibrary(entries)
        library.candidates(map_label)  # must cover this scenario's map
    except (KeyError, ValueError) as exc:
        raise ScenarioError(f"{path}: trajectory library: {exc}") from exc

    noise_raw = resolved.get("localization_noise", {})
    _check_keys(noise_raw, {"sigma_xy", "sigma_psi", "sigma_v"}, "localization_noise", path)
    noise = (
        float(noise_raw.get("sigma_xy", 0.0)),
        float(noise_raw.get("sigma_psi", 0.0)),
        float(noise_raw.get("sigma_v", 0.0)),
    )

    expected = []
    for raw_exp in resolved.get("expected", []):
        _check_keys(raw_exp, {"t_from", "t_to", "behavior", "params"}, "expected", path)
        expected.append(
            Expectation(
                t_from=float(raw_exp.get("t_from", 0.0)),
                t_to=float(raw_exp.get("t_to", duration)),
                behavior=str(_require(raw_exp, "behavior", path)),
                params=tuple(sorted((str(k), str(v)) for k, v in raw_exp.get("params", {}).items())),
            )
        )

    return ScenarioSpec(
        name=name,
        map_label=map_label,
        road=road,
        road_condition=condition,
        weather=weather,
        ego_start=ego,
        actors=actors,
        commands=tuple(commands),
        library=library,
        cadence=cadence,
        duration=duration,
        seed=int(resolved.get("seed", 0)),
        localization_noise=noise,
        expected=tuple(expected),
        record=resolved,
    )


def load_scenario(path: str | Path) -> ScenarioSpec:
    """Load and fully resolve a scenario file."""
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"scenario file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}") from exc
    if not isinstance(raw, dict):
        raise ScenarioError(f"{path}: scenario must be a mapping")

    resolved = dict(raw)
    if "weather" in resolved:
        resolved["weather"] = _resolve_weather(resolved["weather"], str(path))
    trajectories = resolved.get("trajectories")
    if isinstance(trajectories, str):
        lib_path = (path.parent / trajectories).resolve()
        if not lib_path.exists():
            raise ScenarioError(f"{path}: trajectory library not found: {lib_path}")
        library = load_trajectory_library(lib_path)  # validates invariants early
        del library
        resolved["trajectories"] = yaml.safe_load(lib_path.read_text())
    return _build_spec(resolved, str(path))


def scenario_from_record(record: dict) -> ScenarioSpec:
    """Rebuild a spec from the resolved mapping stored in a run log."""
    return _build_spec(record, "<run log>")


def bundled_scenarios() -> tuple[str, ...]:
    root = resources.files("drivebench.scenarios")
    names = [p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml")]
    return tuple(sorted(names))


def bundled_scenario_path(name: str) -> Path:
    path = Path(str(resources.files("drivebench.scenarios") / f"{name}.yaml"))
    if not path.exists():
        raise ScenarioError(
            f"no bundled scenario {name!r}; available: {bundled_scenarios()}"
        )
    return path
