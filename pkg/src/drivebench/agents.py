"""Strategic agents: deterministic rules, scripted replay, remote chat model.

All three implementations share one contract: given a request (rendered
prompt, wall deadline, cycle counter) and the driving state vector, return
an AgentReply. Failures never escape an agent; they are encoded in the
reply outcome so the loop can latch the previous plan and continue.
"""

from __future__ import annotations

import math
import os
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass

import requests

from drivebench.defaults import DEFAULT_LATERAL, DEFAULT_LONGITUDINAL
from drivebench.midlayer import ActionVector, DrivingStateVector
from drivebench.prompting import Prompt, render_action

OUTCOME_OK = "ok"
OUTCOME_TIMEOUT = "timeout"
OUTCOME_TRANSPORT = "transport_error"
OUTCOME_MALFORMED = "malformed"


@dataclass(frozen=True)
class AgentRequest:
    prompt: Prompt
    deadline_ms: float
    seq: int

    def __post_init__(self) -> None:
        if self.deadline_ms <= 0:
            raise ValueError("deadline must be positive")


@dataclass(frozen=True)
class AgentReply:
    text: str
    latency_wall: float  # ms
    outcome: str = OUTCOME_OK

    def __post_init__(self) -> None:
        if self.outcome == OUTCOME_OK and not self.text:
            raise ValueError("ok replies must carry text")


@dataclass(frozen=True)
class Rule:
    """One policy rule: all given predicates must hold for it to fire.

    Predicates read the state vector only: map label, command substrings
    (any of, case-insensitive), weather hints embedded in the frame tag,
    and perception-derived gaps. `max_lead_gap` fires when an in-lane
    object ahead is closer than the threshold; `max_clutter_gap` when any
    object ahead is. The rule is skipped when its behavior is not among
    the current candidates.
    """

    name: str
    behavior: str
    lateral: tuple[float, float, float]
    longitudinal: tuple[float, float, float]
    thought: str
    map_label: str | None = None
    command_contains: tuple[str, ...] = ()
    weather_any: tuple[str, ...] = ()
    max_lead_gap: float | None = None
    max_clutter_gap: float | None = None


@dataclass(frozen=True)
class RulePolicy:
    rules: tuple[Rule, ...]
    lane_half_width: float = 1.75

    def __post_init__(self) -> None:
        if not self.rules:
            raise ValueError("policy needs at least one rule")
        last = self.rules[-1]
        if (
            last.map_label is not None
            or last.command_contains
            or last.weather_any
            or last.max_lead_gap is not None
            or last.max_clutter_gap is not None
            or last.behavior != "following"
        ):
            raise ValueError("final rule must be an unconditional 'following' catch-all")


def _gaps(vs: DrivingStateVector, lane_half_width: float) -> tuple[float, float]:
    """(lead gap in-lane ahead, clutter gap anywhere ahead), meters."""
    lead = math.inf
    clutter = math.inf
    for det in vs.perception.detections.items:
        cx, cy = det.box[0], det.box[1]
        if cx <= 0:
            continue
        dist = math.hypot(cx, cy)
        clutter = min(clutter, dist)
        if abs(cy) <= lane_half_width:
            lead = min(lead, dist)
    return lead, clutter


def _matches(rule: Rule, vs: DrivingStateVector, lead: float, clutter: float) -> bool:
    if rule.map_label is not None and vs.vehicle.m != rule.map_label:
        return False
    if rule.command_contains:
        text = vs.command.text.lower()
        if not any(sub.lower() in text for sub in rule.command_contains):
            return False
    if rule.weather_any:
        hints = vs.perception.frame_tag.split("|")
        if not any(kind in hints for kind in rule.weather_any):
            return False
    if rule.max_lead_gap is not None and not lead < rule.max_lead_gap:
        return False
    if rule.max_clutter_gap is not None and not clutter < rule.max_clutter_gap:
        return False
    return rule.behavior in vs.behaviors.ids()


def decide_rule(vs: DrivingStateVector, policy: RulePolicy) -> AgentReply:
    """Fire the first matching rule and render its action canonically."""
    t0 = time.monotonic_ns()
    lead, clutter = _gaps(vs, policy.lane_half_width)
    chosen = policy.rules[-1]
    for rule in policy.rules:
        if _matches(rule, vs, lead, clutter):
            chosen = rule
            break
    action = ActionVector(
        behavior=chosen.behavior,
        lateral=chosen.lateral,
        longitudinal=chosen.longitudinal,
        rationale=chosen.thought,
    )
    text = render_action(action)
    return AgentReply(text=text, latency_wall=(time.monotonic_ns() - t0) / 1e6)


def decide_scripted(step: int, script: list[str] | tuple[str, ...]) -> AgentReply:
    """Replay a fixed reply list, holding the last entry past the end."""
    if not script:
        raise ValueError("script must be non-empty")
    text = script[min(step, len(script) - 1)]
    if not text:
        return AgentReply(text="", latency_wall=0.0, outcome=OUTCOME_MALFORMED)
    return AgentReply(text=text, latency_wall=0.0)


@dataclass(frozen=True)
class RemoteConfig:
    """Where and how to reach a chat-completions style endpoint."""

    endpoint: str
    model: str = "gpt-4"
    token_env: str = "DRIVEBENCH_API_TOKEN"
    max_retries: int = 1


def decide_remote(request: AgentRequest, cfg: RemoteConfig) -> AgentReply:
    """POST the prompt to a chat endpoint and wrap the outcome.

    The request body is a minimal chat schema ({model, messages}); the
    first assistant message content is the reply text. Timeouts, transport
    failures, and malformed bodies become reply outcomes after at most
    max_retries re-sends.
    """
    if not cfg.endpoint:
        raise ValueError("remote endpoint is not configured")
    headers = {"Content-Type": "application/json"}
    token = os.environ.get(cfg.token_env, "")
    if token:
        headers["Authorization"] = f"Bearer {token}"
    body = {
        "model": cfg.model,
        "messages": [{"role": "user", "content": request.prompt.text}],
    }
    t0 = time.monotonic_ns()
    outcome = OUTCOME_TRANSPORT
    for _ in range(1 + max(0, cfg.max_retries)):
        try:
            response = requests.post(
                cfg.endpoint,
                json=body,
                headers=headers,
                timeout=request.deadline_ms / 1000.0,
            )
        except requests.Timeout:
            outcome = OUTCOME_TIMEOUT
            continue
        except requests.RequestException:
            outcome = OUTCOME_TRANSPORT
            continue
        latency = (time.monotonic_ns() - t0) / 1e6
        if response.status_code != 200:
            outcome = OUTCOME_TRANSPORT
            continue
        try:
            payload = response.json()
            content = payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError):
            return AgentReply(text="", latency_wall=latency, outcome=OUTCOME_MALFORMED)
        if not isinstance(content, str) or not content:
            return AgentReply(text="", latency_wall=latency, outcome=OUTCOME_MALFORMED)
        return AgentReply(text=content, latency_wall=latency)
    return AgentReply(
        text="", latency_wall=(time.monotonic_ns() - t0) / 1e6, outcome=outcome
    )


class RuleAgent:
    name = "rule"

    def __init__(self, policy: RulePolicy | None = None) -> None:
        self.policy = policy if policy is not None else default_policy()

    def respond(self, request: AgentRequest, vs: DrivingStateVector) -> AgentReply:
        return decide_rule(vs, self.policy)


class ScriptedAgent:
    name = "scripted"

    def __init__(self, script: list[str] | tuple[str, ...]) -> None:
        if not script:
            raise ValueError("script must be non-empty")
        self.script = tuple(script)

    def respond(self, request: AgentRequest, vs: DrivingStateVector) -> AgentReply:
        return decide_scripted(request.seq, self.script)


class RemoteAgent:
    name = "remote"

    def __init__(self, cfg: RemoteConfig) -> None:
        self.cfg = cfg

    def respond(self, request: AgentRequest, vs: DrivingStateVector) -> AgentReply:
        return decide_remote(request, self.cfg)


class AsyncAgentDriver:
    """Runs an agent off the simulation thread.

    submit() starts a request without blocking; harvest() returns the reply
    once it is ready, or a timeout reply if the worker has not finished by
    the next agent tick boundary. Virtual time never waits on wall time.
    """

    def __init__(self, agent) -> None:
        self.agent = agent
        self._executor = ThreadPoolExecutor(max_workers=1)
        self._pending: Future | None = None

    def submit(self, request: AgentRequest, vs: DrivingStateVector) -> None:
        if self._pending is not None and not self._pending.done():
            return  # previous cycle still running; keep it
        self._pending = self._executor.submit(self.agent.respond, request, vs)

    def harvest(self) -> AgentReply | None:
        if self._pending is None:
            return None
        if not self._pending.done():
            return AgentReply(text="", latency_wall=0.0, outcome=OUTCOME_TIMEOUT)
        reply = self._pending.result()
        self._pending = None
        return reply

    def close(self) -> None:
        self._executor.shutdown(wait=False, cancel_futures=True)


def default_policy() -> RulePolicy:
    """The bundled decision table.

    Ordered from most to least specific; the trailing catch-all keeps the
    reply total. Parameter choices are relative to the neutral defaults:
    caution lowers Kp and raises c_speed, urgency raises Kp, tight spaces
    raise the lateral-error weight.
    """
    w_lat, w_head, c_speed = DEFAULT_LATERAL
    kp, ki, kd = DEFAULT_LONGITUDINAL
    return RulePolicy(
        rules=(
            Rule(
                name="parking_crowded",
                map_label="parkinglot",
                max_clutter_gap=15.0,
                behavior="following",
                lateral=(1.2, w_head, c_speed),
                longitudinal=(0.9, ki, kd),
                thought=(
                    "The parking area is tight with obstacles nearby, so I follow "
                    "the path with high tracking precision at a careful pace."
                ),
            ),
            Rule(
                name="parking_free",
                map_label="parkinglot",
                behavior="following",
                lateral=(0.6, w_head, c_speed),
                longitudinal=(1.4, ki, kd),
                thought=(
                    "The parking area is mostly clear, so I can track a little "
                    "looser and move out more briskly."
                ),
            ),
            Rule(
                name="low_traction_caution",
                weather_any=("snow", "fog"),
                behavior="following",
                lateral=(w_lat, w_head, 4.0),
                longitudinal=(0.7, ki, kd),
                thought=(
                    "Visibility and traction look poor, so I soften the throttle "
                    "response and penalize steering input to stay stable."
                ),
            ),
            Rule(
                name="overtake_on_request",
                map_label="highway",
                command_contains=("too slow", "overtake", "pass the"),
                max_lead_gap=40.0,
                behavior="overtake",
                lateral=(w_lat, w_head, c_speed),
                longitudinal=(kp, ki, kd),
                thought=(
                    "Traffic ahead is slower than the passenger wants and an "
                    "overtake is available, so I change lanes to pass."
                ),
            ),
            Rule(
                name="overtake_slow_traffic",
                map_label="highway",
                max_lead_gap=25.0,
                behavior="overtake",
                lateral=(w_lat, w_head, c_speed),
                longitudinal=(kp, ki, kd),
                thought=(
                    "The lead vehicle has closed under a safe following gap, so "
                    "I overtake to keep the flow."
                ),
            ),
            Rule(
                name="urgent_passenger",
                command_contains=("hurry", "quick", "flight", "fast", "late"),
                behavior="following",
                lateral=(w_lat, w_head, c_speed),
                longitudinal=(1.6, ki, kd),
                thought=(
                    "The passenger is in a rush and the road is clear enough, so "
                    "I keep the lane and sharpen the speed response."
                ),
            ),
            Rule(
                name="default_follow",
                behavior="following",
                lateral=(w_lat, w_head, c_speed),
                longitudinal=(kp, ki, kd),
                thought="Nothing special is requested, so I keep following safely.",
            ),
        )
    )
