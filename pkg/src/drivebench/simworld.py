"""Hardware-layer surrogate: environment, traffic actors, and ego dynamics.

The plant is a kinematic bicycle (speeds in the bundled scenarios stay
below 50 km/h, where tire dynamics contribute little). Weather degrades
sensing through detection dropout and position noise, and scales the
applied longitudinal acceleration through a friction coefficient. All
functions are pure state-in/state-out; the scenario engine owns the single
mutable world.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from drivebench.defaults import ACTOR_CLASSES, WEATHER_KINDS, WEATHER_PRESETS

TAU = 2.0 * math.pi

# Nominal footprint per actor class, meters (box edge used for detections).
CLASS_EXTENT = {
    "car": 4.5,
    "truck": 8.0,
    "pedestrian": 0.6,
    "cyclist": 1.8,
    "cone": 0.4,
}


def wrap_angle(psi: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    return math.pi - (math.pi - psi) % TAU


@dataclass(frozen=True)
class Pose:
    """Planar pose: global x, y in meters and heading psi in radians."""

    x: float
    y: float
    psi: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "psi", wrap_angle(self.psi))


@dataclass(frozen=True)
class ControlCommand:
    """Longitudinal acceleration (m/s^2) and steering angle (rad)."""

    accel: float
    steer: float


@dataclass(frozen=True)
class EgoState:
    """Ego vehicle state: pose, forward speed (>= 0), last applied accel.

    `a` is the friction-scaled acceleration actually applied on the last
    step; the speed controller bounds the command to the actuator limit
    upstream, so |a| never exceeds it.
    """

    pose: Pose
    v: float
    a: float = 0.0

    def __post_init__(self) -> None:
        if self.v < 0:
            raise ValueError(f"ego speed must be non-negative, got {self.v}")


@dataclass(frozen=True)
class ScriptSegment:
    """Piecewise-constant motion from t onward: hold speed v and heading psi."""

    t: float
    v: float
    psi: float


@dataclass(frozen=True)
class Actor:
    """Scripted traffic participant.

    The timeline `script` is a sequence of segments with strictly increasing
    start times; past the last segment the actor holds the final speed and
    heading. `t` tracks how far along its own timeline the actor has moved.
    """

    actor_id: str
    cls: str
    pose: Pose
    v: float
    script: tuple[ScriptSegment, ...] = ()
    t: float = 0.0

    def __post_init__(self) -> None:
        if self.cls not in ACTOR_CLASSES:
            raise ValueError(f"unknown actor class: {self.cls!r}")
        times = [seg.t for seg in self.script]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"actor {self.actor_id}: script times must be increasing")


@dataclass(frozen=True)
class Weather:
    """Environmental conditions and their sensing/traction effects."""

    kind: str
    visibility: float
    dropout_p: float
    pos_noise_sigma: float
    friction: float

    def __post_init__(self) -> None:
        if self.kind not in WEATHER_KINDS:
            raise ValueError(f"unknown weather kind: {self.kind!r}")
        if self.visibility <= 0:
            raise ValueError("visibility must be positive")
        if not 0.0 <= self.dropout_p <= 1.0:
            raise ValueError("dropout_p must be in [0, 1]")
        if not 0.0 < self.friction <= 1.0:
            raise ValueError("friction must be in (0, 1]")
        if self.pos_noise_sigma < 0:
            raise ValueError("pos_noise_sigma must be non-negative")

    @classmethod
    def preset(cls, kind: str, **overrides) -> "Weather":
        visibility, dropout_p, sigma, friction = WEATHER_PRESETS[kind]
        values = {
            "kind": kind,
            "visibility": visibility,
            "dropout_p": dropout_p,
            "pos_noise_sigma": sigma,
            "friction": friction,
        }
        values.update(overrides)
        return cls(**values)


@dataclass(frozen=True)
class TruthObject:
    """Ground-truth object in the ego frame: class, relative x/y, extent."""

    cls: str
    rel_x: float
    rel_y: float
    extent: float


@dataclass(frozen=True)
class SensorFrame:
    """One simulated forward camera capture.

    `frame_tag` is the opaque stand-in for an encoded image; it embeds the
    weather kind the way a real frame would show the conditions.
    `visibility` records the sensing range the frame was captured under.
    """

    t_virtual: float
    truth_objects: tuple[TruthObject, ...]
    frame_tag: str
    visibility: float


@dataclass(frozen=True)
class WorldState:
    """Everything outside the ego: actors, weather, current time."""

    actors: tuple[Actor, ...]
    weather: Weather
    t_virtual: float = 0.0


def step_dynamics(
    ego: EgoState,
    cmd: ControlCommand,
    friction: float,
    dt: float,
    wheelbase: float = 2.8,
) -> EgoState:
    """Advance the ego one step with the kinematic bicycle model.

    Forward-Euler update: position integrates the current velocity vector,
    heading rate is v/L * tan(steer), and speed integrates the commanded
    acceleration scaled by friction, clamped at zero (no reverse).
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    p = ego.pose
    x = p.x + ego.v * math.cos(p.psi) * dt
    y = p.y + ego.v * math.sin(p.psi) * dt
    psi = wrap_angle(p.psi + (ego.v / wheelbase) * math.tan(cmd.steer) * dt)
    a_eff = friction * cmd.accel
    v = max(0.0, ego.v + a_eff * dt)
    return EgoState(pose=Pose(x, y, psi), v=v, a=a_eff)


def _advance_actor(actor: Actor, dt: float) -> Actor:
    """Integrate one actor along its piecewise-constant timeline."""
    t = actor.t
    t_end = t + dt
    x, y = actor.pose.x, actor.pose.y
    v, psi = actor.v, actor.pose.psi
    # Walk the interval [t, t_end], switching state at each script boundary.
    boundaries = [seg for seg in actor.script if t < seg.t < t_end]
    active = None
    for seg in actor.script:
        if seg.t <= t:
            active = seg
    if active is not None:
        v, psi = active.v, active.psi
    for seg in boundaries:
        span = seg.t - t
        x += v * math.cos(psi) * span
        y += v * math.sin(psi) * span
        t = seg.t
        v, psi = seg.v, seg.psi
    span = t_end - t
    x += v * math.cos(psi) * span
    y += v * math.sin(psi) * span
    return replace(actor, pose=Pose(x, y, psi), v=v, t=t_end)


def step_actors(actors: list[Actor] | tuple[Actor, ...], dt: float) -> tuple[Actor, ...]:
    """Advance every actor by dt, applying script segments piecewise."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return tuple(_advance_actor(actor, dt) for actor in actors)


def sense(
    world: WorldState,
    ego: EgoState,
    weather: Weather,
    rng: np.random.Generator,
    fov_half_angle: float = math.radians(60.0),
) -> SensorFrame:
    """Capture a forward camera frame of the current world.

    Actors inside the visibility radius and the forward cone appear as
    truth objects in the ego frame; each is independently dropped with
    probability dropout_p and surviving positions get zero-mean Gaussian
    noise. Deterministic for a given generator state.
    """
    cos_psi = math.cos(ego.pose.psi)
    sin_psi = math.sin(ego.pose.psi)
    objects: list[TruthObject] = []
    for actor in world.actors:
        dx = actor.pose.x - ego.pose.x
        dy = actor.pose.y - ego.pose.y
        rel_x = cos_psi * dx + sin_psi * dy
        rel_y = -sin_psi * dx + cos_psi * dy
        dist = math.hypot(rel_x, rel_y)
        if dist > weather.visibility:
            continue
        if abs(math.atan2(rel_y, rel_x)) > fov_half_angle:
            continue
        if rng.random() < weather.dropout_p:
            continue
        rel_x += rng.normal(0.0, weather.pos_noise_sigma)
        rel_y += rng.normal(0.0, weather.pos_noise_sigma)
        objects.append(TruthObject(actor.cls, rel_x, rel_y, CLASS_EXTENT[actor.cls]))
    tag = f"cam_front|{weather.kind}|t={world.t_virtual:.2f}"
    return SensorFrame(
        t_virtual=world.t_virtual,
        truth_objects=tuple(objects),
        frame_tag=tag,
        visibility=weather.visibility,
    )
