#!/usr/bin/env python3
"""Regenerate the bundled scenario and trajectory library files.

Run from the repository root:  python3 tools/generate_scenarios.py
"""

from __future__ import annotations

import math
from pathlib import Path

import yaml

OUT = Path(__file__).resolve().parents[1] / "src" / "drivebench" / "scenarios"

KMH_50 = round(50 / 3.6, 4)
KMH_60 = round(60 / 3.6, 4)
KMH_20 = round(20 / 3.6, 4)
KMH_10 = round(10 / 3.6, 4)


def straight(length: float, spacing: float, v: float, y: float = 0.0):
    n = int(length / spacing) + 1
    return [[round(i * spacing, 3), y, v] for i in range(n)]


def lane_change(
    length: float,
    spacing: float,
    v: float,
    shift: float,
    ramp_end: float,
    hold_end: float,
    return_end: float,
):
    """Half-cosine lane change: ramp to `shift`, hold, ramp back."""
    rows = []
    n = int(length / spacing) + 1
    for i in range(n):
        s = i * spacing
        if s <= ramp_end:
            y = shift * (1 - math.cos(math.pi * s / ramp_end)) / 2
        elif s <= hold_end:
            y = shift
        elif s <= return_end:
            frac = (s - hold_end) / (return_end - hold_end)
            y = shift * (1 + math.cos(math.pi * frac)) / 2
        else:
            y = 0.0
        rows.append([round(s, 3), round(y, 4), v])
    return rows


def road_points(x0: float, y0: float, heading: float, length: float):
    return [
        [x0, y0],
        [round(x0 + length * math.cos(heading), 3), round(y0 + length * math.sin(heading), 3)],
    ]


def on_road(x0: float, y0: float, heading: float, station: float, lateral: float):
    """Global position at (station, lateral) in the road frame."""
    nx, ny = -math.sin(heading), math.cos(heading)
    return (
        round(x0 + station * math.cos(heading) + lateral * nx, 3),
        round(y0 + station * math.sin(heading) + lateral * ny, 3),
    )


def dump(name: str, data: dict) -> None:
    path = OUT / name
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(data, sort_keys=False), encoding="utf-8")
    print(f"wrote {path}")


def libraries() -> None:
    dump(
        "trajectories/highway.yaml",
        {
            "trajectories": [
                {
                    "behavior_id": "overtake",
                    "map_label": "highway",
                    "waypoints": lane_change(300, 5.0, KMH_60, 3.5, 25, 160, 200),
                },
                {
                    "behavior_id": "yield",
                    "map_label": "highway",
                    "waypoints": straight(300, 5.0, 8.0),
                },
                {
                    "behavior_id": "following",
                    "map_label": "highway",
                    "waypoints": straight(300, 5.0, KMH_50),
                },
            ]
        },
    )
    # Slow-speed highway recordings for the low-traction trip.
    dump(
        "trajectories/highway_slow.yaml",
        {
            "trajectories": [
                {
                    "behavior_id": "overtake",
                    "map_label": "highway",
                    "waypoints": lane_change(300, 5.0, round(30 / 3.6, 4), 3.5, 25, 160, 200),
                },
                {
                    "behavior_id": "yield",
                    "map_label": "highway",
                    "waypoints": straight(300, 5.0, 2.5),
                },
                {
                    "behavior_id": "following",
                    "map_label": "highway",
                    "waypoints": straight(300, 5.0, KMH_20),
                },
            ]
        },
    )
    dump(
        "trajectories/intersection.yaml",
        {
            "trajectories": [
                {
                    "behavior_id": "yield",
                    "map_label": "intersection",
                    "waypoints": straight(150, 3.0, 2.0),
                },
                {
                    "behavior_id": "following",
                    "map_label": "intersection",
                    "waypoints": straight(150, 3.0, KMH_20),
                },
            ]
        },
    )
    dump(
        "trajectories/parkinglot.yaml",
        {
            "trajectories": [
                {
                    "behavior_id": "yield",
                    "map_label": "parkinglot",
                    "waypoints": straight(80, 2.0, 1.0),
                },
                {
                    "behavior_id": "following",
                    "map_label": "parkinglot",
                    "waypoints": straight(80, 2.0, KMH_10),
                },
            ]
        },
    )


def scenarios() -> None:
    noise = {"sigma_xy": 0.05, "sigma_psi": 0.002, "sigma_v": 0.05}

    # Highway trip 1: clear day at 50 km/h behind a slower truck. The
    # passenger pushes for speed; the agent should overtake, then settle
    # into following in the passing lane.
    h1 = 0.97
    tx, ty = on_road(130.0, 46.0, h1, 60.0, 0.0)
    dump(
        "highway_trip1.yaml",
        {
            "schema_version": 1,
            "name": "highway_trip1",
            "map_label": "highway",
            "road": {
                "centerline": road_points(130.0, 46.0, h1, 60000.0),
                "lanes": 3,
                "lane_width": 3.5,
            },
            "road_condition": "dry",
            "weather": "clear",
            "ego_start": {"x": 130.0, "y": 46.0, "psi": h1, "v": KMH_50},
            "actors": [
                {
                    "id": "slow_truck",
                    "class": "truck",
                    "x": tx,
                    "y": ty,
                    "psi": h1,
                    "v": 8.0,
                    "script": [{"t": 0.0, "v": 8.0, "psi": h1}],
                }
            ],
            "commands": [{"t": 5.0, "text": "The traffic is too slow"}],
            "trajectories": "trajectories/highway.yaml",
            "cadence": 3.0,
            "duration": 15.0,
            "seed": 11,
            "localization_noise": noise,
            "expected": [
                {"t_from": 5.5, "t_to": 8.5, "behavior": "overtake"},
                {"t_from": 9.5, "t_to": 15.0, "behavior": "following"},
            ],
        },
    )

    # Highway trip 2: snowy, low speed, lead car ahead, "Drive safely".
    # Caution: softer throttle response, heavier steering penalty.
    h2 = 0.89
    lx, ly = on_road(231.0, 57.0, h2, 40.0, 0.0)
    lead_v = KMH_20  # same speed as the ego: the gap holds steady
    dump(
        "highway_trip2.yaml",
        {
            "schema_version": 1,
            "name": "highway_trip2",
            "map_label": "highway",
            "road": {
                "centerline": road_points(231.0, 57.0, h2, 2000.0),
                "lanes": 3,
                "lane_width": 3.5,
            },
            "road_condition": "wet",
            "weather": "snow",
            "ego_start": {"x": 231.0, "y": 57.0, "psi": h2, "v": KMH_20},
            "actors": [
                {
                    "id": "lead_car",
                    "class": "car",
                    "x": lx,
                    "y": ly,
                    "psi": h2,
                    "v": lead_v,
                    "script": [{"t": 0.0, "v": lead_v, "psi": h2}],
                }
            ],
            "commands": [{"t": 5.0, "text": "Drive safely"}],
            "trajectories": "trajectories/highway_slow.yaml",
            "cadence": 3.0,
            "duration": 15.0,
            "seed": 12,
            "localization_noise": noise,
            "expected": [
                {
                    "t_from": 6.0,
                    "t_to": 15.0,
                    "behavior": "following",
                    "params": {"Kp": "down", "c_speed": "up"},
                }
            ],
        },
    )

    # Intersection trip 1: clear, empty crossing, urgent passenger.
    # Keep the path but sharpen the speed response.
    i1 = 0.90
    px, py = on_road(197.0, 51.0, i1, 70.0, 10.0)
    dump(
        "intersection_trip1.yaml",
        {
            "schema_version": 1,
            "name": "intersection_trip1",
            "map_label": "intersection",
            "road": {
                "centerline": road_points(197.0, 51.0, i1, 1000.0),
                "lanes": 2,
                "lane_width": 3.5,
            },
            "road_condition": "dry",
            "weather": "clear",
            "ego_start": {"x": 197.0, "y": 51.0, "psi": i1, "v": KMH_20},
            "actors": [
                {
                    "id": "far_pedestrian",
                    "class": "pedestrian",
                    "x": px,
                    "y": py,
                    "psi": round(i1 + 1.5708, 4),
                    "v": 0.8,
                    "script": [{"t": 0.0, "v": 0.8, "psi": round(i1 + 1.5708, 4)}],
                }
            ],
            "commands": [{"t": 5.0, "text": "I need to catch a flight"}],
            "trajectories": "trajectories/intersection.yaml",
            "cadence": 3.0,
            "duration": 15.0,
            "seed": 13,
            "localization_noise": noise,
            "expected": [
                {
                    "t_from": 6.0,
                    "t_to": 15.0,
                    "behavior": "following",
                    "params": {"Kp": "up"},
                }
            ],
        },
    )

    # Intersection trip 2: snow with fog-grade visibility, "Keep safe".
    i2 = 0.89
    cx, cy = on_road(209.0, 46.0, i2, 45.0, 0.0)
    dump(
        "intersection_trip2.yaml",
        {
            "schema_version": 1,
            "name": "intersection_trip2",
            "map_label": "intersection",
            "road": {
                "centerline": road_points(209.0, 46.0, i2, 1000.0),
                "lanes": 2,
                "lane_width": 3.5,
            },
            "road_condition": "wet",
            "weather": {"kind": "snow", "visibility": 35.0},
            "ego_start": {"x": 209.0, "y": 46.0, "psi": i2, "v": KMH_20},
            "actors": [
                {
                    "id": "lead_car",
                    "class": "car",
                    "x": cx,
                    "y": cy,
                    "psi": i2,
                    "v": 5.0,
                    "script": [{"t": 0.0, "v": 5.0, "psi": i2}],
                }
            ],
            "commands": [{"t": 5.0, "text": "Keep safe"}],
            "trajectories": "trajectories/intersection.yaml",
            "cadence": 3.0,
            "duration": 15.0,
            "seed": 14,
            "localization_noise": noise,
            "expected": [
                {
                    "t_from": 6.0,
                    "t_to": 15.0,
                    "behavior": "following",
                    "params": {"Kp": "down", "c_speed": "up"},
                }
            ],
        },
    )

    # Parking trip 1: rows of parked cars pinch the lane; despite the
    # hurry, precision wins: high lateral tracking weight, gentle speed.
    p1 = 0.89
    parked1 = []
    for idx, (station, lateral) in enumerate(
        [(8, 2.6), (14, -2.6), (20, 2.6), (28, -2.6), (36, 2.6), (44, -2.6), (52, 2.6)]
    ):
        x, y = on_road(70.0, 40.0, p1, station, lateral)
        parked1.append(
            {"id": f"parked_{idx}", "class": "car", "x": x, "y": y, "psi": p1, "v": 0.0}
        )
    dump(
        "parking_trip1.yaml",
        {
            "schema_version": 1,
            "name": "parking_trip1",
            "map_label": "parkinglot",
            "road": {
                "centerline": road_points(70.0, 40.0, p1, 300.0),
                "lanes": 1,
                "lane_width": 3.0,
            },
            "road_condition": "dry",
            "weather": "clear",
            "ego_start": {"x": 70.0, "y": 40.0, "psi": p1, "v": KMH_10},
            "actors": parked1,
            "commands": [{"t": 5.0, "text": "I'm in a hurry"}],
            "trajectories": "trajectories/parkinglot.yaml",
            "cadence": 3.0,
            "duration": 15.0,
            "seed": 15,
            "localization_noise": noise,
            "expected": [
                {
                    "t_from": 6.0,
                    "t_to": 15.0,
                    "behavior": "following",
                    "params": {"w_lat": "up", "Kp": "down"},
                }
            ],
        },
    )

    # Parking trip 2: mostly free lot, "leave quickly": tracking can relax
    # a little relative to trip 1 while the speed response firms up.
    p2 = 0.89
    fx, fy = on_road(78.0, 42.0, p2, 60.0, 2.6)
    dump(
        "parking_trip2.yaml",
        {
            "schema_version": 1,
            "name": "parking_trip2",
            "map_label": "parkinglot",
            "road": {
                "centerline": road_points(78.0, 42.0, p2, 300.0),
                "lanes": 1,
                "lane_width": 3.0,
            },
            "road_condition": "dry",
            "weather": "clear",
            "ego_start": {"x": 78.0, "y": 42.0, "psi": p2, "v": KMH_10},
            "actors": [
                {"id": "far_parked", "class": "car", "x": fx, "y": fy, "psi": p2, "v": 0.0}
            ],
            "commands": [{"t": 5.0, "text": "Leave the parking lot quickly"}],
            "trajectories": "trajectories/parkinglot.yaml",
            "cadence": 3.0,
            "duration": 15.0,
            "seed": 16,
            "localization_noise": noise,
            "expected": [
                {
                    "t_from": 6.0,
                    "t_to": 15.0,
                    "behavior": "following",
                    "params": {"w_lat": "up", "Kp": "up"},
                }
            ],
        },
    )


if __name__ == "__main__":
    libraries()
    scenarios()
