"""Information processing and execution between autonomy and the agent.

Four processors condense the 10 Hz message streams into a driving state
vector: perception aggregation, localization adaptation, planning
acquisition with clearance checks, and command latching. Two executors
apply the agent's decision: behavior selection with a safe fallback, and
motion-control refinement that clamps every requested parameter into its
safety range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, NamedTuple

import numpy as np

from drivebench.autonomy.control import MpcWeights, PidGains
from drivebench.autonomy.perception import DetectionSet, VehicleState
from drivebench.autonomy.trajectory import BehaviorOption, BehaviorSet, Trajectory
from drivebench.defaults import ControlDefaults, SAFETY_RANGES
from drivebench.simworld import SensorFrame, WorldState, wrap_angle

AGGREGATION_WINDOW = 0.1  # s; parts older than this are stale at assembly

PARAM_NAMES = ("w_lat", "w_head", "c_speed", "Kp", "Ki", "Kd")


class Stamped(NamedTuple):
    """A topic value plus the publication time and sequence it arrived with."""

    value: Any
    t_virtual: float
    seq: int = 0


@dataclass(frozen=True)
class PerceptionFeed:
    """Detections plus their one-line textual descriptions."""

    detections: DetectionSet
    frame_tag: str
    summary: tuple[str, ...]


@dataclass(frozen=True)
class HumanCommand:
    """Latest passenger command; republished (latched) until a new one lands."""

    text: str
    t_virtual: float
    latched: bool

    def __post_init__(self) -> None:
        if not self.text:
            raise ValueError("command text must be non-empty ('none' is the sentinel)")

    @classmethod
    def none(cls, t_virtual: float = 0.0) -> "HumanCommand":
        return cls(text="none", t_virtual=t_virtual, latched=True)


@dataclass(frozen=True)
class DrivingStateVector:
    """The aggregated snapshot handed to prompt generation."""

    perception: PerceptionFeed
    behaviors: BehaviorSet
    vehicle: VehicleState
    command: HumanCommand
    t_virtual: float
    part_times: tuple[float, float, float, float] = (0.0, 0.0, 0.0, 0.0)
    part_seqs: tuple[int, int, int, int] = (0, 0, 0, 0)


@dataclass(frozen=True)
class ActionVector:
    """Parsed agent decision: behavior plus two parameter triples.

    lateral = (w_lat, w_head, c_speed); longitudinal = (Kp, Ki, Kd).
    """

    behavior: str
    lateral: tuple[float, float, float]
    longitudinal: tuple[float, float, float]
    rationale: str = ""

    def __post_init__(self) -> None:
        if not self.behavior:
            raise ValueError("behavior must be non-empty")
        values = (*self.lateral, *self.longitudinal)
        if len(self.lateral) != 3 or len(self.longitudinal) != 3:
            raise ValueError("parameter triples must have length 3")
        if not all(math.isfinite(v) for v in values):
            raise ValueError("parameters must be finite")


@dataclass(frozen=True)
class ExecutionPlan:
    """The applied decision: active trajectory plus clamped controller params."""

    trajectory: Trajectory
    gains: PidGains
    weights: MpcWeights
    clamped: tuple[str, ...] = ()


@dataclass(frozen=True)
class Violation:
    """A rejected or substituted agent request, for the run log."""

    requested: str
    reason: str
    fallback: str


def aggregate_perception(detections: DetectionSet, frame: SensorFrame) -> PerceptionFeed:
    """Summarize detections as text lines and carry the frame tag along."""
    if abs(detections.t_virtual - frame.t_virtual) > AGGREGATION_WINDOW:
        raise ValueError(
            "detections/frame timestamp mismatch: "
            f"{detections.t_virtual} vs {frame.t_virtual}"
        )
    summary = tuple(
        f"{d.cls} at {math.hypot(d.box[0], d.box[1]):.1f} m, confidence {d.confidence:.2f}"
        for d in detections.items
    )
    return PerceptionFeed(detections=detections, frame_tag=frame.frame_tag, summary=summary)


def adapt_localization(raw: VehicleState) -> VehicleState:
    """Normalize a localized state for the state vector; idempotent.

    Speeds are already SI internally, so the only normalization is heading
    re-wrap; the map label passes through.
    """
    psi = wrap_angle(raw.psi)
    if psi == raw.psi:
        return raw
    return VehicleState(x=raw.x, y=raw.y, psi=psi, v=raw.v, m=raw.m)


def min_clearance(trajectory: Trajectory, ax: float, ay: float, lookahead: float) -> float:
    """Min distance from an actor position to the leading path segments."""
    xs, ys = trajectory.xs, trajectory.ys
    seg = np.hypot(np.diff(xs), np.diff(ys))
    arc = np.concatenate(([0.0], np.cumsum(seg)))
    # Segments starting inside the lookahead window; the small tolerance
    # keeps rotated-waypoint rounding from pulling in an extra segment.
    n_seg = int(np.searchsorted(arc, lookahead - 1e-6))
    n_seg = max(1, min(n_seg, len(xs) - 1))
    x1, y1 = xs[:n_seg], ys[:n_seg]
    x2, y2 = xs[1 : n_seg + 1], ys[1 : n_seg + 1]
    dx, dy = x2 - x1, y2 - y1
    length2 = dx * dx + dy * dy
    t = ((ax - x1) * dx + (ay - y1) * dy) / np.where(length2 > 0, length2, 1.0)
    t = np.clip(t, 0.0, 1.0)
    px, py = x1 + t * dx, y1 + t * dy
    return float(np.min(np.hypot(ax - px, ay - py)))


def acquire_planning(
    behaviors: BehaviorSet,
    world: WorldState,
    safety_radius: float = 2.0,
    lookahead: float = 30.0,
) -> BehaviorSet:
    """Clearance-check candidates against current actor positions.

    A candidate whose leading path passes within `safety_radius` of any
    actor is flagged unsafe and excluded. If every candidate fails, the
    minimum-speed one is retained with a degraded flag so the loop always
    has something to execute.
    """
    if not behaviors.options:
        raise ValueError("behavior set is empty")
    survivors: list[BehaviorOption] = []
    excluded: list[tuple[str, str]] = []
    for opt in behaviors.options:
        blocking = None
        for actor in world.actors:
            clearance = min_clearance(
                opt.trajectory, actor.pose.x, actor.pose.y, lookahead
            )
            if clearance < safety_radius:
                blocking = (actor.actor_id, clearance)
                break
        if blocking is None:
            survivors.append(opt)
        else:
            excluded.append(
                (
                    opt.behavior_id,
                    f"clearance {blocking[1]:.2f} m to {blocking[0]} "
                    f"< {safety_radius:.2f} m",
                )
            )
    if not survivors:
        fallback = min(
            behaviors.options,
            key=lambda o: (o.trajectory.mean_speed(), o.behavior_id),
        )
        excluded = [(bid, why) for bid, why in excluded if bid != fallback.behavior_id]
        survivors = [BehaviorOption(fallback.trajectory, safe=True, degraded=True)]
    return BehaviorSet(options=tuple(survivors), excluded=tuple(excluded))


def process_command(
    event: str | None, prev: HumanCommand | None, t_virtual: float
) -> HumanCommand:
    """Latch passenger commands: new text replaces, absence republishes."""
    if event:
        return HumanCommand(text=event, t_virtual=t_virtual, latched=False)
    if prev is None:
        return HumanCommand.none(t_virtual)
    return HumanCommand(text=prev.text, t_virtual=prev.t_virtual, latched=True)


def assemble_state_vector(
    perception: Stamped | None,
    behaviors: Stamped | None,
    vehicle: Stamped | None,
    command: Stamped | None,
    t_virtual: float,
    window: float = AGGREGATION_WINDOW,
) -> DrivingStateVector:
    """Join the newest copy of each part into one driving state vector.

    Every part must exist and have been published within `window` seconds
    of the assembly time (commands are republished while latched, so a
    latched command is still fresh).
    """
    parts = {
        "perception": perception,
        "behaviors": behaviors,
        "vehicle state": vehicle,
        "command": command,
    }
    for name, stamped in parts.items():
        if stamped is None or stamped.value is None:
            raise ValueError(f"missing {name} at state-vector assembly")
        age = t_virtual - stamped.t_virtual
        if age > window + 1e-9:
            raise ValueError(f"stale {name}: age {age:.3f} s exceeds {window:.3f} s")
    return DrivingStateVector(
        perception=perception.value,
        behaviors=behaviors.value,
        vehicle=vehicle.value,
        command=command.value,
        t_virtual=t_virtual,
        part_times=(perception.t_virtual, behaviors.t_virtual, vehicle.t_virtual, command.t_virtual),
        part_seqs=(perception.seq, behaviors.seq, vehicle.seq, command.seq),
    )


def select_behavior(
    action: ActionVector,
    behaviors: BehaviorSet,
    current: Trajectory,
) -> tuple[Trajectory, Violation | None]:
    """Confirm the agent's behavior choice or fall back to the current one.

    Returns the trajectory to track plus a violation record when the
    request was unknown or flagged unsafe. Never raises: the loop must
    keep an executable maneuver at all times.
    """
    option = behaviors.get(action.behavior)
    if option is None:
        return current, Violation(
            requested=action.behavior,
            reason="behavior not in candidate set",
            fallback=current.behavior_id,
        )
    if not option.safe:
        return current, Violation(
            requested=action.behavior,
            reason="behavior flagged unsafe",
            fallback=current.behavior_id,
        )
    return option.trajectory, None


def refine_motion_control(
    action: ActionVector,
    ranges: dict[str, tuple[float, float]] | None = None,
    control: ControlDefaults = ControlDefaults(),
) -> tuple[PidGains, MpcWeights, tuple[str, ...]]:
    """Clamp the six requested parameters into their safety ranges.

    Returns the controller parameters to apply plus the names of any
    parameters that had to be adjusted.
    """
    ranges = dict(SAFETY_RANGES) if ranges is None else ranges
    requested = dict(zip(PARAM_NAMES, (*action.lateral, *action.longitudinal)))
    clamped: list[str] = []
    applied: dict[str, float] = {}
    for name in PARAM_NAMES:
        lo, hi = ranges[name]
        if lo > hi:
            raise ValueError(f"malformed range for {name}: [{lo}, {hi}]")
        value = requested[name]
        bounded = min(hi, max(lo, value))
        if bounded != value:
            clamped.append(name)
        applied[name] = bounded
    gains = PidGains(Kp=applied["Kp"], Ki=applied["Ki"], Kd=applied["Kd"])
    weights = MpcWeights(
        w_lat=applied["w_lat"],
        w_head=applied["w_head"],
        c_speed=applied["c_speed"],
        horizon=control.horizon,
        dt=control.dt,
        terminal_weight=control.terminal_weight,
    )
    return gains, weights, tuple(clamped)
