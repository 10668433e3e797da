"""Golden-log regression: re-run a recorded scenario from its own log.

The run log embeds the fully resolved scenario, so replay needs nothing
but the log file: it rebuilds the spec, reconstructs a scripted agent from
the recorded reply texts, re-executes with the same seed, and requires the
decision sequence to match exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

from drivebench.agents import ScriptedAgent
from drivebench.defaults import BenchConfig
from drivebench.harness.loop import RunLog, run
from drivebench.harness.scenario import scenario_from_record
from drivebench.runtime import read_records, wall_invariant_lines

# Recorded failure cycles replay as an unparseable sentinel so the loop
# holds the previous plan exactly like the original run did.
FAILURE_SENTINEL = "[no reply]"


class ReplayMismatchError(AssertionError):
    """Replayed decisions diverged from the recorded ones."""

    def __init__(self, mismatches: list[str]) -> None:
        super().__init__("; ".join(mismatches))
        self.mismatches = mismatches


def _decision_key(record: dict) -> tuple:
    return (
        record["cycle"],
        record["t_virtual"],
        record["behavior"],
        tuple(record["lateral"]),
        tuple(record["longitudinal"]),
        record["held"],
    )


# Topics whose envelopes do not depend on which agent produced the replies:
# original-vs-replay streams must match on these byte for byte. Reply and
# parse envelopes are excluded because a recorded failure cycle replays as
# an unparseable sentinel (same applied effect, different reply metadata).
_AGENT_FREE_TOPICS = frozenset(
    {
        "sensor_frame",
        "detections",
        "perception_feed",
        "localization",
        "vehicle_state",
        "behavior_set",
        "human_command",
        "actors",
        "state_vector",
        "prompt",
        "execution_plan",
        "ego_state",
        "control_command",
    }
)


def _envelope_lines(records: list[dict]) -> list[str]:
    lines = wall_invariant_lines(records)
    kept = []
    for line in lines:
        record = json.loads(line)
        if record.get("kind") == "envelope" and record["topic"] in _AGENT_FREE_TOPICS:
            kept.append(line)
    return kept


def replay(
    log_path: str | Path, config: BenchConfig | None = None
) -> tuple[RunLog, list[str]]:
    """Re-execute a logged run; returns the new log and any mismatches.

    Raises ReplayMismatchError when the decision sequences differ and
    ValueError when the log is unreadable or incomplete.
    """
    records = read_records(log_path)
    if not records or records[0].get("kind") != "meta":
        raise ValueError(f"{log_path}: missing meta record")
    meta = records[0]
    if "scenario" not in meta:
        raise ValueError(f"{log_path}: meta record carries no scenario")
    spec = scenario_from_record(meta["scenario"])

    recorded = sorted(
        (r for r in records if r.get("kind") == "decision"),
        key=lambda r: r["cycle"],
    )
    script = [r["reply_text"] or FAILURE_SENTINEL for r in recorded]
    if not script:
        script = [FAILURE_SENTINEL]

    new_log = run(spec, ScriptedAgent(script), config=config)

    mismatches: list[str] = []
    replayed = [d.record() for d in new_log.decisions]
    if len(replayed) != len(recorded):
        mismatches.append(
            f"decision count {len(replayed)} != recorded {len(recorded)}"
        )
    for old, new in zip(recorded, replayed):
        if _decision_key(old) != _decision_key(new):
            mismatches.append(
                f"cycle {old['cycle']}: recorded {_decision_key(old)} "
                f"!= replayed {_decision_key(new)}"
            )

    if meta.get("payload_retention", "full") == "full":
        old_lines = _envelope_lines(records)
        new_lines = _envelope_lines(new_log.records())
        if len(old_lines) != len(new_lines):
            mismatches.append(
                f"envelope count {len(new_lines)} != recorded {len(old_lines)}"
            )
        diverged = sum(1 for a, b in zip(old_lines, new_lines) if a != b)
        if diverged:
            mismatches.append(f"{diverged} envelope(s) diverged from the recording")

    if mismatches:
        raise ReplayMismatchError(mismatches)
    return new_log, mismatches
