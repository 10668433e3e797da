"""The closed loop: plant at 100 Hz, mid-layer at 10 Hz, agent per cadence.

Each 10 Hz tick runs the sensing/processing chain and republishes the four
state-vector parts; every agent cadence boundary assembles the freshest
parts, renders the prompt, queries the agent, and applies the decision
under safety clamps. Controllers run at the 10 Hz tick with zero-order
hold between plant substeps. Every instrumented operation contributes one
latency sample and one output envelope, and the whole virtual-time record
is deterministic for a fixed seed and agent.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import psutil

from drivebench.agents import AgentReply, AgentRequest, AsyncAgentDriver, OUTCOME_OK
from drivebench.autonomy.control import MpcWeights, PidGains, PidState, track
from drivebench.autonomy.perception import DetectionSet, VehicleState, detect, localize
from drivebench.autonomy.trajectory import BehaviorSet, plan_behaviors
from drivebench.defaults import (
    DEFAULT_LATERAL,
    DEFAULT_LONGITUDINAL,
    ROAD_CONDITION_FRICTION,
    BenchConfig,
)
from drivebench.harness.scenario import ScenarioSpec
from drivebench.midlayer import (
    ActionVector,
    DrivingStateVector,
    ExecutionPlan,
    HumanCommand,
    PerceptionFeed,
    Stamped,
    Violation,
    acquire_planning,
    adapt_localization,
    aggregate_perception,
    assemble_state_vector,
    process_command,
    refine_motion_control,
    select_behavior,
)
from drivebench.prompting import (
    ActionWarning,
    ParseFailure,
    Prompt,
    PromptTemplate,
    build_prompt,
    parse_action,
    validate_action,
)
from drivebench.runtime import (
    Envelope,
    Instrumentation,
    LatestCache,
    MessageBus,
    SimClock,
)
from drivebench.runtime import runlog as rl
from drivebench.simworld import (
    ControlCommand,
    EgoState,
    SensorFrame,
    WorldState,
    sense,
    step_actors,
    step_dynamics,
)

# Topics whose payloads are replaced by a type stub under light retention.
HEAVY_TOPICS = (
    "sensor_frame",
    "detections",
    "perception_feed",
    "behavior_set",
    "state_vector",
    "prompt",
)

PART_TOPICS = ("perception_feed", "behavior_set", "vehicle_state", "human_command")


@dataclass(frozen=True)
class ActorSnapshot:
    actor_id: str
    cls: str
    x: float
    y: float
    psi: float
    v: float


@dataclass(frozen=True)
class ActorsFrame:
    items: tuple[ActorSnapshot, ...]


@dataclass(frozen=True)
class Decision:
    """One agent cycle's outcome, applied or held."""

    t_virtual: float
    cycle: int
    reply_text: str
    outcome: str
    held: bool
    applied_behavior: str
    applied_lateral: tuple[float, float, float]
    applied_longitudinal: tuple[float, float, float]
    clamped: tuple[str, ...]
    action: ActionVector | ParseFailure | None = None
    warnings: tuple[ActionWarning, ...] = ()
    violation: Violation | None = None
    vs: DrivingStateVector | None = None
    prompt: Prompt | None = None
    safe_ids: tuple[str, ...] = ()

    def record(self) -> dict:
        action: Any
        if isinstance(self.action, ActionVector):
            action = rl.encode_payload(self.action)
        elif isinstance(self.action, ParseFailure):
            action = {"error": self.action.kind, "field": self.action.field}
        else:
            action = None
        return {
            "kind": "decision",
            "t_virtual": self.t_virtual,
            "cycle": self.cycle,
            "reply_text": self.reply_text,
            "outcome": self.outcome,
            "held": self.held,
            "behavior": self.applied_behavior,
            "lateral": list(self.applied_lateral),
            "longitudinal": list(self.applied_longitudinal),
            "clamped": list(self.clamped),
            "action": action,
        }


@dataclass
class RunLog:
    """Everything one run produced, ordered by (t_virtual, publication)."""

    meta: dict
    envelopes: list[Envelope] = field(default_factory=list)
    latencies: list = field(default_factory=list)
    resources: list = field(default_factory=list)
    violations: list[tuple[float, Violation]] = field(default_factory=list)
    decisions: list[Decision] = field(default_factory=list)
    metrics_record: dict | None = None

    def records(self) -> list[dict]:
        out = [dict(self.meta, kind="meta")]
        events: list[tuple[float, int, dict]] = []
        for order, env in enumerate(self.envelopes):
            events.append((env.t_virtual, order, rl.envelope_record(env)))
        base = len(events)
        for order, (t, violation) in enumerate(self.violations):
            events.append(
                (
                    t,
                    base + order,
                    {
                        "kind": "violation",
                        "t_virtual": t,
                        "requested": violation.requested,
                        "reason": violation.reason,
                        "fallback": violation.fallback,
                    },
                )
            )
        base = len(events)
        for order, decision in enumerate(self.decisions):
            events.append((decision.t_virtual, base + order, decision.record()))
        events.sort(key=lambda item: (item[0], item[1]))
        out.extend(record for _, _, record in events)
        out.extend(rl.latency_record(s) for s in self.latencies)
        out.extend(rl.resource_record(s) for s in self.resources)
        if self.metrics_record is not None:
            out.append(self.metrics_record)
        return out

    def write(self, path: str | Path) -> Path:
        return rl.write_records(path, self.records())


def _default_plan(behaviors: BehaviorSet, config: BenchConfig) -> ExecutionPlan:
    """Initial plan before any agent decision: prefer safe 'following'."""
    option = behaviors.get("following")
    if option is None or not option.safe:
        safe = [o for o in behaviors.options if o.safe]
        option = min(safe, key=lambda o: (o.trajectory.mean_speed(), o.behavior_id))
    return ExecutionPlan(
        trajectory=option.trajectory,
        gains=PidGains(*DEFAULT_LONGITUDINAL),
        weights=MpcWeights(
            *DEFAULT_LATERAL,
            horizon=config.control.horizon,
            dt=config.control.dt,
            terminal_weight=config.control.terminal_weight,
        ),
        clamped=(),
    )


class _Loop:
    """State for one run; split out of run() to keep the tick readable."""

    def __init__(
        self,
        spec: ScenarioSpec,
        agent,
        config: BenchConfig,
        payload_retention: str,
        async_agent: bool,
        template: PromptTemplate,
    ) -> None:
        self.spec = spec
        self.agent = agent
        self.config = config
        self.template = template
        self.clock = SimClock()
        self.bus = MessageBus()
        self.instr = Instrumentation(trace_memory=config.trace_memory)
        self.retention = payload_retention
        self.log = RunLog(
            meta={
                "schema": 1,
                "scenario": spec.to_record(),
                "scenario_name": spec.name,
                "agent": getattr(agent, "name", type(agent).__name__),
                "seed": spec.seed,
                "payload_retention": payload_retention,
                "std_convention": "population",
            }
        )
        topics: dict[str, type | tuple[type, ...]] = {
            "sensor_frame": SensorFrame,
            "detections": DetectionSet,
            "perception_feed": PerceptionFeed,
            "localization": VehicleState,
            "vehicle_state": VehicleState,
            "behavior_set": BehaviorSet,
            "human_command": HumanCommand,
            "actors": ActorsFrame,
            "state_vector": DrivingStateVector,
            "prompt": Prompt,
            "agent_reply": AgentReply,
            "action": (ActionVector, ParseFailure),
            "execution_plan": ExecutionPlan,
            "ego_state": EgoState,
            "control_command": ControlCommand,
        }
        for topic, kind in topics.items():
            self.bus.register(topic, kind)
            self.bus.subscribe(topic, self._record)
        self.cache = LatestCache(self.bus, PART_TOPICS)

        self.rng = np.random.default_rng(spec.seed)
        self.ego = spec.ego_start
        self.actors = spec.actors
        self.friction = min(
            1.0, spec.weather.friction * ROAD_CONDITION_FRICTION[spec.road_condition]
        )
        self.pid_state = PidState(dt=1.0 / config.midlayer_hz)
        self.plan: ExecutionPlan | None = None
        self.prev_command: HumanCommand | None = None
        self.control = ControlCommand(0.0, 0.0)
        self.pending_commands = list(spec.commands)
        self.driver = AsyncAgentDriver(agent) if async_agent else None
        self.cycle = 0
        self.behavior_set: BehaviorSet | None = None

    def _record(self, envelope: Envelope) -> None:
        if self.retention == "light" and envelope.topic in HEAVY_TOPICS:
            envelope = replace(
                envelope, payload={"type": type(envelope.payload).__name__}
            )
        self.log.envelopes.append(envelope)

    def _stamped(self, topic: str) -> Stamped | None:
        env = self.cache.latest(topic)
        if env is None:
            return None
        return Stamped(env.payload, env.t_virtual, env.seq)

    def _publish_span(self, topic: str, payload, t: float, span) -> None:
        self.bus.publish(
            topic, payload, t, t_wall_in=span.t_wall_in, t_wall_out=span.t_wall_out
        )

    def mid_tick(self, t: float) -> None:
        config, spec = self.config, self.spec
        world = WorldState(actors=self.actors, weather=spec.weather, t_virtual=t)
        frame = sense(world, self.ego, spec.weather, self.rng, config.fov_half_angle)
        self.bus.publish("sensor_frame", frame, t)

        with self.instr.span("Object Detection", t) as sp:
            detections = detect(frame)
        self._publish_span("detections", detections, t, sp)

        with self.instr.span("Vision Perception Aggregator", t) as sp:
            feed = aggregate_perception(detections, frame)
        self._publish_span("perception_feed", feed, t, sp)

        with self.instr.span("Localization", t) as sp:
            raw_state = localize(self.ego, spec.map_label, spec.localization_noise, self.rng)
        self._publish_span("localization", raw_state, t, sp)

        with self.instr.span("Localization State Adapter", t) as sp:
            vehicle_state = adapt_localization(raw_state)
        self._publish_span("vehicle_state", vehicle_state, t, sp)

        anchor = spec.road.lane_anchor(self.ego.pose)
        with self.instr.span("Behavior Planning", t):
            candidates = plan_behaviors(spec.library, vehicle_state, anchor)
        with self.instr.span("Planning & Navigation Acquisition", t) as sp:
            self.behavior_set = acquire_planning(
                candidates,
                world,
                safety_radius=config.safety_radius,
                lookahead=config.clearance_lookahead,
            )
        self._publish_span("behavior_set", self.behavior_set, t, sp)
        self.bus.publish(
            "actors",
            ActorsFrame(
                tuple(
                    ActorSnapshot(a.actor_id, a.cls, a.pose.x, a.pose.y, a.pose.psi, a.v)
                    for a in self.actors
                )
            ),
            t,
        )

        event = None
        if self.pending_commands and self.pending_commands[0].t <= t:
            event = self.pending_commands.pop(0).text
        with self.instr.span("Speech Command Processor", t) as sp:
            command = process_command(event, self.prev_command, t)
        self.prev_command = command
        self._publish_span("human_command", command, t, sp)

        if self.plan is None:
            self.plan = _default_plan(self.behavior_set, config)
            self.bus.publish("execution_plan", self.plan, t)

    def agent_tick(self, t: float) -> None:
        config = self.config
        vs = assemble_state_vector(
            self._stamped("perception_feed"),
            self._stamped("behavior_set"),
            self._stamped("vehicle_state"),
            self._stamped("human_command"),
            t,
            window=config.aggregation_window,
        )
        self.bus.publish("state_vector", vs, t)
        with self.instr.span("Prompt Generation Interface", t) as sp:
            prompt = build_prompt(vs, self.template)
        self._publish_span("prompt", prompt, t, sp)

        self.cycle += 1
        request = AgentRequest(
            prompt=prompt, deadline_ms=config.agent_deadline_ms, seq=self.cycle - 1
        )
        if self.driver is None:
            reply = self.agent.respond(request, vs)
        else:
            reply = self.driver.harvest()
            self.driver.submit(request, vs)
            if reply is None:
                self.cycle -= 1  # nothing to apply on the very first boundary
                return
        self.bus.publish("agent_reply", reply, t)
        self._apply_reply(reply, vs, prompt, t)

    def _decision(self, t, reply, held, plan, **extra) -> None:
        self.log.decisions.append(
            Decision(
                t_virtual=t,
                cycle=self.cycle,
                reply_text=reply.text,
                outcome=reply.outcome,
                held=held,
                applied_behavior=plan.trajectory.behavior_id,
                applied_lateral=(
                    plan.weights.w_lat, plan.weights.w_head, plan.weights.c_speed
                ),
                applied_longitudinal=(plan.gains.Kp, plan.gains.Ki, plan.gains.Kd),
                clamped=plan.clamped,
                safe_ids=self.behavior_set.safe_ids(),
                **extra,
            )
        )

    def _apply_reply(
        self, reply: AgentReply, vs: DrivingStateVector, prompt: Prompt, t: float
    ) -> None:
        """Parse, validate, and execute one reply; hold the plan on failure."""
        if reply.outcome != OUTCOME_OK:
            self._decision(t, reply, True, self.plan, vs=vs, prompt=prompt)
            return

        with self.instr.span("Action Interface", t) as sp:
            parsed = parse_action(reply.text)
        self._publish_span("action", parsed, t, sp)
        if isinstance(parsed, ParseFailure):
            self._decision(
                t, reply, True, self.plan, action=parsed, vs=vs, prompt=prompt
            )
            return

        warnings = validate_action(parsed, self.behavior_set, self.config.safety_ranges)

        with self.instr.span("Driving Behavior Selection", t):
            trajectory, violation = select_behavior(
                parsed, self.behavior_set, self.plan.trajectory
            )
        if violation is not None:
            self.log.violations.append((t, violation))

        with self.instr.span("Motion Control Refinement", t):
            gains, weights, clamped = refine_motion_control(
                parsed, self.config.safety_ranges, self.config.control
            )
        self.plan = ExecutionPlan(
            trajectory=trajectory, gains=gains, weights=weights, clamped=clamped
        )
        self.bus.publish("execution_plan", self.plan, t)
        self._decision(
            t,
            reply,
            False,
            self.plan,
            action=parsed,
            warnings=tuple(warnings),
            violation=violation,
            vs=vs,
            prompt=prompt,
        )

    def control_tick(self, t: float) -> None:
        state = VehicleState(
            x=self.ego.pose.x,
            y=self.ego.pose.y,
            psi=self.ego.pose.psi,
            v=self.ego.v,
            m=self.spec.map_label,
        )
        with self.instr.span("Trajectory Tracking", t) as sp:
            self.control, self.pid_state = track(
                self.plan.trajectory,
                state,
                self.plan.gains,
                self.plan.weights,
                self.pid_state,
                self.config.vehicle,
            )
        self._publish_span("control_command", self.control, t, sp)
        self.bus.publish("ego_state", self.ego, t)

    def substep(self, dt: float) -> None:
        self.actors = step_actors(self.actors, dt)
        self.ego = step_dynamics(
            self.ego, self.control, self.friction, dt, self.config.vehicle.wheelbase
        )

    def finish(self) -> RunLog:
        if self.driver is not None:
            self.driver.close()
        self.log.latencies = list(self.instr.latencies)
        try:
            self.log.resources = self.instr.resource_samples(
                sorted(self.instr.cpu_ns), psutil.virtual_memory().total
            )
        finally:
            self.instr.close()
        return self.log


def run(
    spec: ScenarioSpec,
    agent,
    config: BenchConfig | None = None,
    payload_retention: str = "full",
    async_agent: bool = False,
    prompt_template: PromptTemplate | None = None,
) -> RunLog:
    """Execute one scenario end to end and return the complete run log."""
    config = config or BenchConfig()
    template = prompt_template or PromptTemplate()
    if payload_retention not in ("full", "light"):
        raise ValueError("payload_retention must be 'full' or 'light'")
    dyn_hz, mid_hz = config.dynamics_hz, config.midlayer_hz
    if dyn_hz % mid_hz:
        raise ValueError("dynamics rate must be a multiple of the mid-layer rate")
    mid_every = dyn_hz // mid_hz
    cadence_ticks = round(spec.cadence * dyn_hz)
    if cadence_ticks % mid_every:
        raise ValueError("agent cadence must be a multiple of the mid-layer period")
    n_steps = round(spec.duration * dyn_hz)
    dt = 1.0 / dyn_hz

    loop = _Loop(spec, agent, config, payload_retention, async_agent, template)
    try:
        for k in range(n_steps + 1):
            t = k / dyn_hz
            loop.clock.advance_to(t)
            if k % mid_every == 0:
                loop.mid_tick(t)
                if k > 0 and k % cadence_ticks == 0:
                    loop.agent_tick(t)
                loop.control_tick(t)
            if k < n_steps:
                loop.substep(dt)
    finally:
        log = loop.finish()
    return log
