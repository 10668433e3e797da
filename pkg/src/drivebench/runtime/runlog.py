"""Newline-delimited run-log records.

One structured record per line: an envelope, a latency or resource sample,
a violation, or a decision. Keys are sorted and floats use repr formatting,
so equal runs serialize to identical bytes. Wall-clock data (t_wall_* and
the latency/resource records) is excluded by the wall-invariant view used
for determinism checks and replay comparisons.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from drivebench.runtime.bus import Envelope
from drivebench.runtime.instrumentation import LatencySample, ResourceSample

WALL_FIELDS = ("t_wall_in", "t_wall_out", "latency_wall")
WALL_RECORD_KINDS = ("latency", "resource")


def _jsonable(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        out = {"type": type(value).__name__}
        for f in dataclasses.fields(value):
            out[f.name] = _jsonable(getattr(value, f.name))
        return out
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def encode_payload(payload: Any) -> Any:
    """Render any bus payload as JSON-safe data with a type tag."""
    encoded = _jsonable(payload)
    if not isinstance(encoded, dict):
        encoded = {"type": type(payload).__name__, "value": encoded}
    return encoded


def envelope_record(envelope: Envelope, payload: Any | None = None) -> dict:
    return {
        "kind": "envelope",
        "topic": envelope.topic,
        "seq": envelope.seq,
        "t_virtual": envelope.t_virtual,
        "t_wall_in": envelope.t_wall_in,
        "t_wall_out": envelope.t_wall_out,
        "payload": encode_payload(envelope.payload if payload is None else payload),
    }


def latency_record(sample: LatencySample) -> dict:
    return {
        "kind": "latency",
        "module": sample.module,
        "L_ms": sample.L_ms,
        "t_virtual": sample.t_virtual,
    }


def resource_record(sample: ResourceSample) -> dict:
    return {
        "kind": "resource",
        "module": sample.module,
        "R_cpu": sample.R_cpu,
        "R_mem": sample.R_mem,
        "R_gpu": sample.R_gpu,
    }


def dump_line(record: dict) -> str:
    return json.dumps(record, sort_keys=True, separators=(",", ":"))


def write_records(path: str | Path, records: Iterable[dict]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(dump_line(record))
            fh.write("\n")
    return path


def read_records(path: str | Path) -> list[dict]:
    records = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{n}: bad run-log line: {exc}") from exc
    return records


def strip_wall_fields(record: dict) -> dict:
    """Drop wall-clock keys at any depth (payloads can embed them too)."""

    def scrub(value: Any) -> Any:
        if isinstance(value, dict):
            return {k: scrub(v) for k, v in value.items() if k not in WALL_FIELDS}
        if isinstance(value, list):
            return [scrub(v) for v in value]
        return value

    return scrub(record)


def wall_invariant_lines(records: Iterable[dict]) -> list[str]:
    """Canonical lines for determinism checks: wall-clock data removed."""
    lines = []
    for record in records:
        if record.get("kind") in WALL_RECORD_KINDS:
            continue
        lines.append(dump_line(strip_wall_fields(record)))
    return lines
