"""Pre-recorded behavior trajectories and the candidate planner.

Planning results are represented by a library of pre-recorded waypoint
trajectories per map, each a named maneuver (following, overtake, yield)
with a speed profile. The planner re-anchors library trajectories to the
ego's current position so candidates always describe "the maneuver started
from here". Curvature is derived per waypoint with a three-point
circumcircle fit and is invariant under re-anchoring.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
import yaml

from drivebench.autonomy.perception import VehicleState
from drivebench.defaults import MAP_LABELS
from drivebench.simworld import Pose


def _circumcircle_curvature(xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Signed curvature per waypoint from three-point circumcircle fits.

    kappa = 2 * cross(p2-p1, p3-p2) / (|p2-p1| |p3-p2| |p3-p1|); endpoints
    copy their neighbors. Positive curvature bends left.
    """
    n = len(xs)
    kappa = np.zeros(n)
    if n < 3:
        return kappa
    ax, ay = xs[:-2], ys[:-2]
    bx, by = xs[1:-1], ys[1:-1]
    cx, cy = xs[2:], ys[2:]
    cross = (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
    d_ab = np.hypot(bx - ax, by - ay)
    d_bc = np.hypot(cx - bx, cy - by)
    d_ac = np.hypot(cx - ax, cy - ay)
    denom = d_ab * d_bc * d_ac
    with np.errstate(divide="ignore", invalid="ignore"):
        mid = np.where(denom > 1e-12, 2.0 * cross / denom, 0.0)
    kappa[1:-1] = mid
    kappa[0] = kappa[1]
    kappa[-1] = kappa[-2]
    return kappa


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A named maneuver: ordered waypoints with a reference speed profile.

    Compares by identity (the waypoint arrays make field equality
    ill-defined); the arrays are frozen after construction so published
    trajectories are safe to share across threads.
    """

    behavior_id: str
    xs: np.ndarray
    ys: np.ndarray
    v_ref: np.ndarray
    kappa: np.ndarray

    def __post_init__(self) -> None:
        for arr in (self.xs, self.ys, self.v_ref, self.kappa):
            arr.flags.writeable = False
        n = len(self.xs)
        if n < 2:
            raise ValueError(f"trajectory {self.behavior_id!r} needs >= 2 waypoints")
        if not (len(self.ys) == len(self.v_ref) == len(self.kappa) == n):
            raise ValueError(f"trajectory {self.behavior_id!r} has ragged columns")
        dx = np.diff(self.xs)
        dy = np.diff(self.ys)
        if np.any(np.hypot(dx, dy) <= 1e-9):
            raise ValueError(
                f"trajectory {self.behavior_id!r} has coincident consecutive waypoints"
            )
        if np.any(self.v_ref < 0):
            raise ValueError(f"trajectory {self.behavior_id!r} has negative v_ref")

    @classmethod
    def from_waypoints(
        cls, behavior_id: str, waypoints: list[tuple[float, float, float]]
    ) -> "Trajectory":
        arr = np.asarray(waypoints, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] != 3:
            raise ValueError(
                f"trajectory {behavior_id!r} needs >= 2 (x, y, v_ref) waypoints"
            )
        xs, ys, v_ref = arr[:, 0].copy(), arr[:, 1].copy(), arr[:, 2].copy()
        return cls(behavior_id, xs, ys, v_ref, _circumcircle_curvature(xs, ys))

    @property
    def waypoints(self) -> list[tuple[float, float, float]]:
        return [
            (float(x), float(y), float(v))
            for x, y, v in zip(self.xs, self.ys, self.v_ref)
        ]

    def mean_speed(self) -> float:
        return float(np.mean(self.v_ref))

    def anchored(self, anchor: Pose) -> "Trajectory":
        """Rigidly place this trajectory's local frame at `anchor`."""
        c, s = np.cos(anchor.psi), np.sin(anchor.psi)
        xs = anchor.x + c * self.xs - s * self.ys
        ys = anchor.y + s * self.xs + c * self.ys
        return replace(self, xs=xs, ys=ys)


@dataclass(frozen=True)
class BehaviorOption:
    """One candidate maneuver plus its safety verdict."""

    trajectory: Trajectory
    safe: bool = True
    degraded: bool = False

    @property
    def behavior_id(self) -> str:
        return self.trajectory.behavior_id


@dataclass(frozen=True)
class BehaviorSet:
    """Named candidate trajectories for the current situation.

    `excluded` lists behavior ids removed by the clearance check, with the
    reason, for the violation log. `degraded` options are the last-resort
    minimum-speed fallback kept when nothing passes clearance.
    """

    options: tuple[BehaviorOption, ...]
    excluded: tuple[tuple[str, str], ...] = ()

    def __post_init__(self) -> None:
        ids = [opt.behavior_id for opt in self.options]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate behavior ids in set: {ids}")

    def ids(self) -> tuple[str, ...]:
        return tuple(opt.behavior_id for opt in self.options)

    def safe_ids(self) -> tuple[str, ...]:
        return tuple(opt.behavior_id for opt in self.options if opt.safe)

    def get(self, behavior_id: str) -> BehaviorOption | None:
        for opt in self.options:
            if opt.behavior_id == behavior_id:
                return opt
        return None


class TrajectoryLibrary:
    """Maneuver trajectories grouped by map label, in maneuver-local frames."""

    def __init__(self, entries: dict[str, list[Trajectory]]) -> None:
        for map_label, trajectories in entries.items():
            if map_label not in MAP_LABELS:
                raise ValueError(f"unknown map label in library: {map_label!r}")
            ids = [t.behavior_id for t in trajectories]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate behavior ids for {map_label!r}: {ids}")
        self._entries = {k: tuple(v) for k, v in entries.items()}

    def maps(self) -> tuple[str, ...]:
        return tuple(self._entries)

    def candidates(self, map_label: str) -> tuple[Trajectory, ...]:
        if map_label not in self._entries:
            raise KeyError(f"no trajectories for map label {map_label!r}")
        return self._entries[map_label]


def load_trajectory_library(path: str | Path) -> TrajectoryLibrary:
    """Load a trajectory library file.

    Format: a `trajectories` list of records, each with behavior_id,
    map_label, and waypoints as [x, y, v_ref] rows. Invariants are
    validated on load.
    """
    path = Path(path)
    raw = yaml.safe_load(path.read_text())
    if not isinstance(raw, dict) or "trajectories" not in raw:
        raise ValueError(f"{path}: expected a mapping with a 'trajectories' list")
    entries: dict[str, list[Trajectory]] = {}
    for i, record in enumerate(raw["trajectories"]):
        missing = {"behavior_id", "map_label", "waypoints"} - set(record)
        if missing:
            raise ValueError(f"{path}: trajectory #{i} missing fields {sorted(missing)}")
        trajectory = Trajectory.from_waypoints(
            record["behavior_id"],
            [tuple(row) for row in record["waypoints"]],
        )
        entries.setdefault(record["map_label"], []).append(trajectory)
    return TrajectoryLibrary(entries)


def plan_behaviors(
    library: TrajectoryLibrary,
    state: VehicleState,
    anchor: Pose | None = None,
) -> BehaviorSet:
    """Produce the candidate behavior set for the current state.

    Candidates are the library trajectories for the state's map label,
    re-anchored so each maneuver starts at `anchor` (the ego pose when no
    explicit anchor, e.g. a lane-aligned road frame, is supplied). All
    candidates start out flagged safe; clearance checking happens in the
    mid-layer acquisition step.
    """
    if anchor is None:
        anchor = Pose(state.x, state.y, state.psi)
    options = tuple(
        BehaviorOption(trajectory=t.anchored(anchor))
        for t in library.candidates(state.m)
    )
    return BehaviorSet(options=options)
