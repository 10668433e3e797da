"""Prompt rendering and agent-reply parsing.

A prompt has three sections in fixed order: a system statement, optional
few-shot examples, and the live status block. The status block renders the
vehicle state (speed in km/h, two decimal places throughout), the frame
tag standing in for the camera image, the candidate behaviors, and the
passenger's command. Replies are parsed tolerantly: labeled fields in any
order, case-insensitive, with structured failures instead of exceptions.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from drivebench.defaults import SAFETY_RANGES
from drivebench.midlayer import ActionVector, DrivingStateVector
from drivebench.autonomy.trajectory import BehaviorSet

STATUS_FIELDS = ("state", "image", "behaviors", "command")

BEHAVIOR_LABEL = "Selected Driving Behavior"
LATERAL_LABEL = "Lateral Control Params"
LONGITUDINAL_LABEL = "Longitudinal Control Params"

_BEHAVIOR_RE = re.compile(r"selected\s+driving\s+behavior\s*:\s*\[([^\]]*)\]", re.I)
_LATERAL_RE = re.compile(r"lateral\s+control\s+params\s*:\s*\[([^\]]*)\]", re.I)
_LONGITUDINAL_RE = re.compile(r"longitudinal\s+control\s+params\s*:\s*\[([^\]]*)\]", re.I)
_THOUGHT_RE = re.compile(
    r"thought\s*:\s*(.*?)(?=action\s*:|selected\s+driving\s+behavior|"
    r"lateral\s+control\s+params|longitudinal\s+control\s+params|\Z)",
    re.I | re.S,
)

DEFAULT_SYSTEM_STATEMENT = (
    "You are the decision module of an autonomous vehicle. Each query gives\n"
    "you the vehicle state [x, y, heading, speed km/h, map], a front-view\n"
    "camera frame tag, the maneuvers currently available, and the\n"
    "passenger's latest request. Reason step by step about safety and the\n"
    "passenger's intent, then answer with exactly one available maneuver\n"
    "and six control parameters in this format:\n"
    "Thought: <your reasoning>\n"
    "Selected Driving Behavior: [<behavior>]\n"
    "Lateral Control Params: [<w_lat>, <w_head>, <c_speed>]\n"
    "Longitudinal Control Params: [<Kp>, <Ki>, <Kd>]"
)

DEFAULT_FEW_SHOT = (
    (
        "The current vehicle state is [130.00, 46.00, 0.97, 50.00, highway]\n"
        "The front view image captured is [cam_front|clear|t=12.30]\n"
        "The possible driving behavior is [overtake, yield, following]\n"
        "The passenger's command is [driving_more_stable]",
        "The passenger wants a stable ride on the highway, so I keep the\n"
        "current lane, avoid overtaking, and use moderate gains.",
        "Selected Driving Behavior: [following]\n"
        "Lateral Control Params: [0.2, 0.35, 2.0]\n"
        "Longitudinal Control Params: [1.1, 0.02, 0.01]",
    ),
)


@dataclass(frozen=True)
class PromptTemplate:
    """System statement, few-shot examples, and status field order."""

    system_statement: str = DEFAULT_SYSTEM_STATEMENT
    few_shot_examples: tuple[tuple[str, str, str], ...] = DEFAULT_FEW_SHOT
    status_format: tuple[str, ...] = STATUS_FIELDS

    def __post_init__(self) -> None:
        if set(self.status_format) != set(STATUS_FIELDS):
            raise ValueError(
                f"status_format must cover exactly {STATUS_FIELDS}, "
                f"got {self.status_format}"
            )


@dataclass(frozen=True)
class Prompt:
    """Rendered prompt text plus provenance of its inputs."""

    text: str
    token_estimate: int
    source_seq: tuple[int, int, int, int]


@dataclass(frozen=True)
class ParseFailure:
    """Structured reply-parse error: never raised, always returned."""

    kind: str  # "missing_field" | "bad_arity" | "non_numeric"
    field: str
    arity: int = 0

    def message(self) -> str:
        if self.kind == "bad_arity":
            return f"{self.field}: expected 3 numbers, got {self.arity}"
        if self.kind == "non_numeric":
            return f"{self.field}: non-numeric parameter"
        return f"missing field: {self.field}"


@dataclass(frozen=True)
class ActionWarning:
    """Advisory finding from validate_action (pre-clamp)."""

    kind: str  # "unknown_behavior" | "out_of_range"
    name: str


def _status_lines(vs: DrivingStateVector, order: tuple[str, ...]) -> list[str]:
    s = vs.vehicle
    lines = {
        "state": (
            f"The current vehicle state is "
            f"[{s.x:.2f}, {s.y:.2f}, {s.psi:.2f}, {s.v * 3.6:.2f}, {s.m}]"
        ),
        "image": f"The front view image captured is [{vs.perception.frame_tag}]",
        "behaviors": (
            f"The possible driving behavior is [{', '.join(vs.behaviors.ids())}]"
        ),
        "command": f"The passenger's command is [{vs.command.text}]",
    }
    return [lines[name] for name in order]


def build_prompt(vs: DrivingStateVector, tpl: PromptTemplate) -> Prompt:
    """Render the three prompt sections for one driving state vector."""
    sections = [tpl.system_statement]
    for query, thought, action in tpl.few_shot_examples:
        sections.append(f"Query: {query}\nThought: {thought}\nAction: {action}")
    sections.append("\n".join(_status_lines(vs, tpl.status_format)))
    text = "\n\n".join(sections)
    return Prompt(
        text=text,
        token_estimate=-(-len(text.encode("utf-8")) // 4),
        source_seq=vs.part_seqs,
    )


def _parse_triple(
    match: re.Match | None, label: str, short: str
) -> tuple[float, float, float] | ParseFailure:
    if match is None:
        return ParseFailure("missing_field", label)
    tokens = [tok.strip() for tok in match.group(1).split(",")]
    if len(tokens) != 3:
        return ParseFailure("bad_arity", short, arity=len(tokens))
    values = []
    for tok in tokens:
        try:
            value = float(tok)
        except ValueError:
            return ParseFailure("non_numeric", short)
        if not math.isfinite(value):
            return ParseFailure("non_numeric", short)
        values.append(value)
    return (values[0], values[1], values[2])


def parse_action(reply: str) -> ActionVector | ParseFailure:
    """Extract the labeled decision fields from arbitrary reply text.

    Fields may appear in any order and any case. Returns an ActionVector
    or a ParseFailure; never raises, whatever the input bytes decode to.
    """
    if not isinstance(reply, str):
        return ParseFailure("missing_field", BEHAVIOR_LABEL)
    behavior_match = _BEHAVIOR_RE.search(reply)
    if behavior_match is None:
        return ParseFailure("missing_field", BEHAVIOR_LABEL)
    behavior = behavior_match.group(1).strip().lower()
    if not behavior:
        return ParseFailure("missing_field", BEHAVIOR_LABEL)

    lateral = _parse_triple(_LATERAL_RE.search(reply), LATERAL_LABEL, "lateral")
    if isinstance(lateral, ParseFailure):
        return lateral
    longitudinal = _parse_triple(
        _LONGITUDINAL_RE.search(reply), LONGITUDINAL_LABEL, "longitudinal"
    )
    if isinstance(longitudinal, ParseFailure):
        return longitudinal

    thought_match = _THOUGHT_RE.search(reply)
    rationale = thought_match.group(1).strip() if thought_match else ""
    return ActionVector(
        behavior=behavior,
        lateral=lateral,
        longitudinal=longitudinal,
        rationale=rationale,
    )


def render_action(action: ActionVector) -> str:
    """Canonical reply text for an action vector (round-trips via parse)."""
    lines = []
    if action.rationale:
        lines.append(f"Thought: {action.rationale}")
    lines.append(f"{BEHAVIOR_LABEL}: [{action.behavior}]")
    lines.append(f"{LATERAL_LABEL}: [{action.lateral[0]!r}, {action.lateral[1]!r}, {action.lateral[2]!r}]")
    lines.append(
        f"{LONGITUDINAL_LABEL}: "
        f"[{action.longitudinal[0]!r}, {action.longitudinal[1]!r}, {action.longitudinal[2]!r}]"
    )
    return "\n".join(lines)


def validate_action(
    action: ActionVector,
    behaviors: BehaviorSet,
    ranges: dict[str, tuple[float, float]] | None = None,
) -> list[ActionWarning]:
    """Advisory checks before clamping: unknown behavior, out-of-range params."""
    ranges = dict(SAFETY_RANGES) if ranges is None else ranges
    warnings = []
    if action.behavior not in behaviors.ids():
        warnings.append(ActionWarning("unknown_behavior", action.behavior))
    named = zip(
        ("w_lat", "w_head", "c_speed", "Kp", "Ki", "Kd"),
        (*action.lateral, *action.longitudinal),
    )
    for name, value in named:
        lo, hi = ranges[name]
        if not lo <= value <= hi:
            warnings.append(ActionWarning("out_of_range", name))
    return warnings


def load_prompt_template(path) -> PromptTemplate:
    """Read a template file with `=== system/example/status ===` sections."""
    from pathlib import Path

    text = Path(path).read_text(encoding="utf-8")
    section_re = re.compile(r"^===\s*(system|example|status)\s*===\s*$", re.M)
    pieces = section_re.split(text)
    if len(pieces) < 3:
        raise ValueError(f"{path}: no template sections found")
    system = ""
    examples: list[tuple[str, str, str]] = []
    status: tuple[str, ...] = STATUS_FIELDS
    for name, body in zip(pieces[1::2], pieces[2::2]):
        body = body.strip("\n")
        if name == "system":
            system = body
        elif name == "example":
            q = re.search(r"Query:\s*(.*?)(?=\nThought:|\Z)", body, re.S)
            t = re.search(r"Thought:\s*(.*?)(?=\nAction:|\Z)", body, re.S)
            a = re.search(r"Action:\s*(.*)", body, re.S)
            if not (q and t and a):
                raise ValueError(f"{path}: example section needs Query/Thought/Action")
            examples.append((q.group(1).strip(), t.group(1).strip(), a.group(1).strip()))
        elif name == "status":
            status = tuple(line.strip() for line in body.splitlines() if line.strip())
    return PromptTemplate(
        system_statement=system,
        few_shot_examples=tuple(examples),
        status_format=status,
    )
