"""Autonomy surrogate: simulated detection, localization, planning, control."""

from drivebench.autonomy.control import (
    MpcWeights,
    PidGains,
    PidState,
    mpc_input_sequence,
    mpc_lateral_control,
    pid_speed_control,
    track,
)
from drivebench.autonomy.perception import Detection, DetectionSet, detect, localize
from drivebench.autonomy.trajectory import (
    BehaviorOption,
    BehaviorSet,
    Trajectory,
    TrajectoryLibrary,
    VehicleState,
    load_trajectory_library,
    plan_behaviors,
)

__all__ = [
    "BehaviorOption",
    "BehaviorSet",
    "Detection",
    "DetectionSet",
    "MpcWeights",
    "PidGains",
    "PidState",
    "Trajectory",
    "TrajectoryLibrary",
    "VehicleState",
    "detect",
    "load_trajectory_library",
    "localize",
    "mpc_input_sequence",
    "mpc_lateral_control",
    "pid_speed_control",
    "plan_behaviors",
    "track",
]
