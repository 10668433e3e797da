"""Virtual clock, typed in-process message bus, and per-module instrumentation."""

from drivebench.runtime.bus import Envelope, LatestCache, MessageBus, UnknownTopicError
from drivebench.runtime.clock import SimClock
from drivebench.runtime.instrumentation import (
    Instrumentation,
    LatencySample,
    ResourceSample,
    latency_stats,
    measure_latency,
    resource_utilization,
)
from drivebench.runtime.runlog import (
    encode_payload,
    read_records,
    strip_wall_fields,
    wall_invariant_lines,
    write_records,
)

__all__ = [
    "Envelope",
    "Instrumentation",
    "LatencySample",
    "LatestCache",
    "MessageBus",
    "ResourceSample",
    "SimClock",
    "UnknownTopicError",
    "encode_payload",
    "latency_stats",
    "measure_latency",
    "read_records",
    "resource_utilization",
    "strip_wall_fields",
    "wall_invariant_lines",
    "write_records",
]
