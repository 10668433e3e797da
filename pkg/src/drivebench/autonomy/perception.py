"""Simulated object detection and noisy localization.

The detector mirrors a single-stage neural detector's signature, returning
bounding boxes, class labels, and confidence scores per frame, but computes
them from simulated ground truth: confidence falls off linearly with
distance over the sensing range. Localization perturbs ground truth with
configurable Gaussian noise instead of running scan matching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from drivebench.defaults import MAP_LABELS
from drivebench.simworld import EgoState, SensorFrame, wrap_angle

CONFIDENCE_FLOOR = 0.05
CONFIDENCE_CEIL = 0.99


@dataclass(frozen=True)
class Detection:
    """One detected object: ego-frame box (cx, cy, w, h), class, confidence."""

    box: tuple[float, float, float, float]
    cls: str
    confidence: float


@dataclass(frozen=True)
class DetectionSet:
    """Detections for one frame, stamped with the frame's capture time."""

    items: tuple[Detection, ...]
    t_virtual: float
    frame_tag: str


@dataclass(frozen=True)
class VehicleState:
    """Localized ego state: position, heading, speed, and map label."""

    x: float
    y: float
    psi: float
    v: float
    m: str

    def __post_init__(self) -> None:
        if self.m not in MAP_LABELS:
            raise ValueError(f"unknown map label: {self.m!r}")


def detect(frame: SensorFrame) -> DetectionSet:
    """Turn a sensor frame into detections.

    Confidence is clamp(1 - distance/visibility, 0.05, 0.99); boxes are
    centered on the (noisy) object position and sized from the extent.
    """
    items = []
    for obj in frame.truth_objects:
        dist = math.hypot(obj.rel_x, obj.rel_y)
        p = 1.0 - dist / frame.visibility
        p = min(CONFIDENCE_CEIL, max(CONFIDENCE_FLOOR, p))
        items.append(
            Detection(
                box=(obj.rel_x, obj.rel_y, obj.extent, obj.extent),
                cls=obj.cls,
                confidence=p,
            )
        )
    return DetectionSet(items=tuple(items), t_virtual=frame.t_virtual, frame_tag=frame.frame_tag)


def localize(
    ego: EgoState,
    map_label: str,
    noise: tuple[float, float, float],
    rng: np.random.Generator,
) -> VehicleState:
    """Ground truth plus Gaussian noise (sigma_xy, sigma_psi, sigma_v).

    Heading is re-wrapped and speed clamped at zero so the result is always
    a valid vehicle state. Deterministic per generator state.
    """
    sigma_xy, sigma_psi, sigma_v = noise
    if sigma_xy < 0 or sigma_psi < 0 or sigma_v < 0:
        raise ValueError("noise sigmas must be non-negative")
    x = ego.pose.x + rng.normal(0.0, sigma_xy)
    y = ego.pose.y + rng.normal(0.0, sigma_xy)
    psi = wrap_angle(ego.pose.psi + rng.normal(0.0, sigma_psi))
    v = max(0.0, ego.v + rng.normal(0.0, sigma_v))
    return VehicleState(x=x, y=y, psi=psi, v=v, m=map_label)
