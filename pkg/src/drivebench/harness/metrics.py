"""Run metrics: per-module latency, accuracy, and resource utilization.

Latency statistics (mean, population standard deviation, max) come from
the instrumented spans. Accuracy compares each module's logged outputs
against deterministic expectation oracles: regeneration equality for the
prompt and action interfaces, latching correctness for the command
processor, format and geometry rechecks for the processors, the safety
contracts for the executors, and any expected-decision annotations the
scenario carries. Resource percentages follow part/total * 100 per module.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from pathlib import Path

from drivebench.defaults import (
    BenchConfig,
    DEFAULT_LATERAL,
    DEFAULT_LONGITUDINAL,
)
from drivebench.harness.loop import ActorsFrame, RunLog
from drivebench.harness.scenario import ScenarioSpec
from drivebench.midlayer import PARAM_NAMES, adapt_localization, min_clearance
from drivebench.prompting import ParseFailure, PromptTemplate, build_prompt, parse_action
from drivebench.runtime import latency_stats

TABLE_MODULES = (
    "Prompt Generation Interface",
    "Action Interface",
    "Speech Command Processor",
    "Vision Perception Aggregator",
    "Localization State Adapter",
    "Planning & Navigation Acquisition",
    "Driving Behavior Selection",
    "Motion Control Refinement",
)

TABLE_COLUMNS = (
    "Module",
    "Average Latency (ms)",
    "Latency Standard Deviation (ms)",
    "Max Latency (ms)",
    "CPU (%)",
    "Memory (%)",
    "GPU (%)",
)

SPEECH_FOOTNOTE = (
    "Speech Command Processor accuracy reflects command latching only; "
    "commands are ingested as text events, not audio."
)

_DEFAULTS = dict(zip(PARAM_NAMES, (*DEFAULT_LATERAL, *DEFAULT_LONGITUDINAL)))


@dataclass(frozen=True)
class ModuleMetrics:
    module: str
    samples: int
    avg_ms: float
    std_ms: float
    max_ms: float
    accuracy: float
    checked: int
    cpu: float
    mem: float
    gpu: float


@dataclass(frozen=True)
class MetricsReport:
    modules: tuple[ModuleMetrics, ...]
    meta: dict

    def module(self, name: str) -> ModuleMetrics:
        for m in self.modules:
            if m.module == name:
                return m
        raise KeyError(name)

    def to_record(self) -> dict:
        return {
            "kind": "metrics",
            "meta": dict(self.meta),
            "modules": [
                {
                    "module": m.module,
                    "samples": m.samples,
                    "avg_ms": m.avg_ms,
                    "std_ms": m.std_ms,
                    "max_ms": m.max_ms,
                    "accuracy": m.accuracy,
                    "checked": m.checked,
                    "cpu": m.cpu,
                    "mem": m.mem,
                    "gpu": m.gpu,
                }
                for m in self.modules
            ],
        }

    @classmethod
    def from_record(cls, record: dict) -> "MetricsReport":
        modules = tuple(
            ModuleMetrics(
                module=m["module"],
                samples=m["samples"],
                avg_ms=m["avg_ms"],
                std_ms=m["std_ms"],
                max_ms=m["max_ms"],
                accuracy=m["accuracy"],
                checked=m["checked"],
                cpu=m["cpu"],
                mem=m["mem"],
                gpu=m["gpu"],
            )
            for m in record["modules"]
        )
        return cls(modules=modules, meta=dict(record["meta"]))


class _Tally:
    def __init__(self) -> None:
        self.passed = 0
        self.checked = 0
        self.failures: list[str] = []

    def add(self, ok: bool, detail: str = "") -> None:
        self.checked += 1
        self.passed += ok
        if not ok and detail and len(self.failures) < 20:
            self.failures.append(detail)

    def accuracy(self) -> float:
        if self.checked == 0:
            return 100.0
        return 100.0 * self.passed / self.checked


def _check_prompt_generation(log: RunLog, tally: _Tally) -> None:
    template = PromptTemplate()
    for d in log.decisions:
        if d.vs is None or d.prompt is None:
            continue
        regenerated = build_prompt(d.vs, template)
        tally.add(
            regenerated.text == d.prompt.text,
            f"cycle {d.cycle}: prompt does not regenerate byte-identically",
        )


def _check_action_interface(log: RunLog, tally: _Tally) -> None:
    for d in log.decisions:
        if d.outcome != "ok":
            continue
        reparsed = parse_action(d.reply_text)
        if isinstance(d.action, ParseFailure):
            ok = isinstance(reparsed, ParseFailure) and reparsed.kind == d.action.kind
        else:
            ok = reparsed == d.action
        tally.add(ok, f"cycle {d.cycle}: reply does not reparse to the logged action")


def _check_speech(log: RunLog, spec: ScenarioSpec, tally: _Tally) -> None:
    events = list(spec.commands)
    expected_text = "none"
    expected_fresh_t: float | None = None
    for env in log.envelopes:
        if env.topic != "human_command":
            continue
        cmd = env.payload
        if isinstance(cmd, dict):  # light retention stub
            return
        # Mirror the loop: at most one pending event consumed per tick.
        if events and events[0].t <= env.t_virtual:
            expected_text = events.pop(0).text
            expected_fresh_t = env.t_virtual
        fresh = expected_fresh_t is not None and env.t_virtual == expected_fresh_t
        ok = cmd.text == expected_text and cmd.latched == (not fresh)
        tally.add(ok, f"t={env.t_virtual}: command latching mismatch")


def _check_perception_aggregation(log: RunLog, tally: _Tally) -> None:
    for env in log.envelopes:
        if env.topic != "perception_feed":
            continue
        feed = env.payload
        if isinstance(feed, dict):
            return
        items = feed.detections.items
        ok = len(feed.summary) == len(items)
        if ok:
            for line, det in zip(feed.summary, items):
                expected = (
                    f"{det.cls} at {math.hypot(det.box[0], det.box[1]):.1f} m, "
                    f"confidence {det.confidence:.2f}"
                )
                if line != expected:
                    ok = False
                    break
        tally.add(ok, f"t={env.t_virtual}: perception summary mismatch")


def _check_localization_adapter(log: RunLog, tally: _Tally) -> None:
    for env in log.envelopes:
        if env.topic != "vehicle_state":
            continue
        state = env.payload
        if isinstance(state, dict):
            return
        ok = (
            -math.pi < state.psi <= math.pi
            and state.v >= 0
            and adapt_localization(state) == state
        )
        tally.add(ok, f"t={env.t_virtual}: adapted state not normalized/idempotent")


def _check_planning_acquisition(
    log: RunLog, config: BenchConfig, tally: _Tally
) -> None:
    actors_by_t: dict[float, ActorsFrame] = {}
    for env in log.envelopes:
        if env.topic == "actors" and not isinstance(env.payload, dict):
            actors_by_t[env.t_virtual] = env.payload
    for env in log.envelopes:
        if env.topic != "behavior_set":
            continue
        bset = env.payload
        if isinstance(bset, dict):
            return
        ok = len(bset.options) >= 1
        survivors = {o.behavior_id for o in bset.options}
        ok = ok and not survivors & {bid for bid, _ in bset.excluded}
        actors = actors_by_t.get(env.t_virtual)
        if ok and actors is not None:
            for opt in bset.options:
                if opt.degraded:
                    continue
                for actor in actors.items:
                    clearance = min_clearance(
                        opt.trajectory, actor.x, actor.y, config.clearance_lookahead
                    )
                    if clearance < config.safety_radius:
                        ok = False
                        break
                if not ok:
                    break
        tally.add(ok, f"t={env.t_virtual}: surviving behavior fails clearance recheck")


def _check_behavior_selection(
    log: RunLog, spec: ScenarioSpec, tally: _Tally
) -> list[str]:
    failures = []
    for d in log.decisions:
        if d.outcome != "ok" or isinstance(d.action, ParseFailure) or d.action is None:
            continue
        ok = d.applied_behavior in d.safe_ids
        if d.action.behavior in d.safe_ids:
            ok = ok and d.applied_behavior == d.action.behavior
        else:
            ok = ok and d.held is False and d.violation is not None
        tally.add(ok, f"cycle {d.cycle}: selection contract violated")
    for exp in spec.expected:
        for d in log.decisions:
            if not exp.t_from <= d.t_virtual <= exp.t_to:
                continue
            ok = d.applied_behavior == exp.behavior
            tally.add(ok, f"t={d.t_virtual}: expected {exp.behavior}, got {d.applied_behavior}")
            if not ok:
                failures.append(
                    f"{spec.name} t={d.t_virtual}: behavior {d.applied_behavior} "
                    f"!= expected {exp.behavior}"
                )
    return failures


def _check_motion_refinement(
    log: RunLog, spec: ScenarioSpec, config: BenchConfig, tally: _Tally
) -> list[str]:
    failures = []
    for d in log.decisions:
        if d.outcome != "ok" or isinstance(d.action, ParseFailure) or d.action is None:
            continue
        applied = dict(zip(PARAM_NAMES, (*d.applied_lateral, *d.applied_longitudinal)))
        requested = dict(zip(PARAM_NAMES, (*d.action.lateral, *d.action.longitudinal)))
        ok = True
        for name, value in applied.items():
            lo, hi = config.safety_ranges[name]
            if not lo <= value <= hi:
                ok = False
            if lo <= requested[name] <= hi and value != requested[name]:
                ok = False
        tally.add(ok, f"cycle {d.cycle}: refinement clamp contract violated")
    for exp in spec.expected:
        if not exp.params:
            continue
        for d in log.decisions:
            if not exp.t_from <= d.t_virtual <= exp.t_to:
                continue
            applied = dict(zip(PARAM_NAMES, (*d.applied_lateral, *d.applied_longitudinal)))
            ok = True
            for name, direction in exp.params:
                if direction == "up":
                    ok = ok and applied[name] > _DEFAULTS[name]
                elif direction == "down":
                    ok = ok and applied[name] < _DEFAULTS[name]
                else:
                    ok = ok and applied[name] == _DEFAULTS[name]
            tally.add(ok, f"t={d.t_virtual}: parameter direction mismatch")
            if not ok:
                failures.append(
                    f"{spec.name} t={d.t_virtual}: params {exp.params} not satisfied"
                )
    return failures


def compute_metrics(
    log: RunLog, spec: ScenarioSpec, config: BenchConfig | None = None
) -> MetricsReport:
    """Produce the per-module metrics table for one run."""
    if not log.envelopes and not log.latencies:
        raise ValueError("run log is empty")
    config = config or BenchConfig()

    tallies = {module: _Tally() for module in TABLE_MODULES}
    _check_prompt_generation(log, tallies["Prompt Generation Interface"])
    _check_action_interface(log, tallies["Action Interface"])
    _check_speech(log, spec, tallies["Speech Command Processor"])
    _check_perception_aggregation(log, tallies["Vision Perception Aggregator"])
    _check_localization_adapter(log, tallies["Localization State Adapter"])
    _check_planning_acquisition(log, config, tallies["Planning & Navigation Acquisition"])
    expectation_failures = _check_behavior_selection(
        log, spec, tallies["Driving Behavior Selection"]
    )
    expectation_failures += _check_motion_refinement(
        log, spec, config, tallies["Motion Control Refinement"]
    )

    resources = {s.module: s for s in log.resources}
    modules = []
    for name in TABLE_MODULES:
        count = sum(1 for s in log.latencies if s.module == name)
        if count:
            avg, std, mx = latency_stats(log.latencies, name)
        else:
            avg = std = mx = 0.0
        res = resources.get(name)
        tally = tallies[name]
        modules.append(
            ModuleMetrics(
                module=name,
                samples=count,
                avg_ms=avg,
                std_ms=std,
                max_ms=mx,
                accuracy=tally.accuracy(),
                checked=tally.checked,
                cpu=res.R_cpu if res else 0.0,
                mem=res.R_mem if res else 0.0,
                gpu=res.R_gpu if res else 0.0,
            )
        )

    meta = {
        "scenario": spec.name,
        "seed": spec.seed,
        "agent": log.meta.get("agent", "?"),
        "duration": spec.duration,
        "cadence": spec.cadence,
        "decisions": len(log.decisions),
        "violations": len(log.violations),
        "std_convention": "population",
        "expectation_failures": expectation_failures,
        "check_failures": {
            name: tallies[name].failures for name in TABLE_MODULES if tallies[name].failures
        },
    }
    return MetricsReport(modules=tuple(modules), meta=meta)


def _format_table(report: MetricsReport) -> str:
    rows = [TABLE_COLUMNS]
    for m in report.modules:
        rows.append(
            (
                m.module,
                f"{m.avg_ms:.4f}",
                f"{m.std_ms:.4f}",
                f"{m.max_ms:.4f}",
                f"{m.cpu:.2f}",
                f"{m.mem:.4f}",
                f"{m.gpu:.2f}",
            )
        )
    widths = [max(len(row[i]) for row in rows) for i in range(len(TABLE_COLUMNS))]
    lines = [
        "System Components Latency and Performance",
        f"scenario: {report.meta['scenario']}  seed: {report.meta['seed']}  "
        f"agent: {report.meta['agent']}",
        f"latency std convention: {report.meta['std_convention']}",
        "",
    ]
    header, *body = rows
    lines.append("  ".join(h.ljust(w) for h, w in zip(header, widths)).rstrip())
    lines.append("  ".join("-" * w for w in widths))
    for row in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    lines.append("")
    lines.append("Accuracy (%)")
    for m in report.modules:
        lines.append(f"  {m.module}: {m.accuracy:.2f} ({m.checked} checked)")
    lines.append("")
    lines.append(f"note: {SPEECH_FOOTNOTE}")
    return "\n".join(lines) + "\n"


def _format_csv(report: MetricsReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(TABLE_COLUMNS + ("Accuracy (%)", "Checked"))
    for m in report.modules:
        writer.writerow(
            (
                m.module,
                f"{m.avg_ms:.4f}",
                f"{m.std_ms:.4f}",
                f"{m.max_ms:.4f}",
                f"{m.cpu:.2f}",
                f"{m.mem:.4f}",
                f"{m.gpu:.2f}",
                f"{m.accuracy:.2f}",
                m.checked,
            )
        )
    return buffer.getvalue()


def emit_report(
    report: MetricsReport, fmt: str, out_dir: str | Path, stem: str = "report"
) -> Path:
    """Write the report in the requested format; byte-stable for equal input."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if fmt == "table":
        path = out_dir / f"{stem}.txt"
        path.write_text(_format_table(report), encoding="utf-8")
    elif fmt == "csv":
        path = out_dir / f"{stem}.csv"
        path.write_text(_format_csv(report), encoding="utf-8")
    else:
        raise ValueError(f"unknown report format: {fmt!r}")
    return path
