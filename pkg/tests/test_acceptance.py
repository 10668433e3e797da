"""Acceptance criteria, one test per criterion, run at stated tolerances.

Run with `pytest tests/test_acceptance.py -v -s` to see one PASS line per
criterion. Every bound and tolerance is pinned here, not configurable.
"""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import FIXTURES, make_trajectory
from drivebench.agents import RemoteAgent, RemoteConfig, RuleAgent, ScriptedAgent
from drivebench.autonomy import (
    MpcWeights,
    PidGains,
    PidState,
    mpc_input_sequence,
    mpc_lateral_control,
    pid_speed_control,
)
from drivebench.autonomy.trajectory import BehaviorOption, BehaviorSet
from drivebench.defaults import BenchConfig, SAFETY_RANGES
from drivebench.harness import (
    bundled_scenario_path,
    compute_metrics,
    emit_report,
    load_scenario,
    run,
)
from drivebench.harness.metrics import _format_table
from drivebench.harness.replay import replay
from drivebench.harness.scenario import scenario_from_record
from drivebench.midlayer import ActionVector, refine_motion_control, select_behavior
from drivebench.prompting import ParseFailure, parse_action, render_action
from drivebench.runtime import latency_stats, wall_invariant_lines

SIX_TRIPS = (
    "highway_trip1",
    "highway_trip2",
    "intersection_trip1",
    "intersection_trip2",
    "parking_trip1",
    "parking_trip2",
)

FIVE_EXACT_MODULES = (
    "Prompt Generation Interface",
    "Action Interface",
    "Planning & Navigation Acquisition",
    "Driving Behavior Selection",
    "Motion Control Refinement",
)

MID_MODULES = (
    "Vision Perception Aggregator",
    "Localization State Adapter",
    "Planning & Navigation Acquisition",
    "Speech Command Processor",
    "Driving Behavior Selection",
    "Motion Control Refinement",
)

HOLD_FOLLOWING = render_action(
    ActionVector("following", (0.2, 0.35, 2.0), (1.1, 0.02, 0.01), "hold lane")
)


def trip(name, **overrides):
    spec = load_scenario(bundled_scenario_path(name))
    if overrides:
        spec = scenario_from_record(dict(spec.to_record(), **overrides))
    return spec


def tracking_spec():
    return load_scenario(FIXTURES / "straight_tracking.yaml")


def ego_lateral(log):
    return [(e.t_virtual, e.payload.pose.y) for e in log.envelopes if e.topic == "ego_state"]


def test_criterion_01_latency_bounds():
    """1,000 agent cycles of highway_trip1 within the stated latency budget."""
    spec = trip("highway_trip1", duration=3000.0)
    t0 = time.monotonic()
    log = run(spec, RuleAgent(), payload_retention="light")
    elapsed = time.monotonic() - t0

    assert len(log.decisions) >= 1000, "expected at least 1000 agent cycles"
    avg, _, mx = latency_stats(log.latencies, "Prompt Generation Interface")
    assert mx < 20.0, f"build_prompt max {mx:.3f} ms >= 20 ms"
    assert avg < 10.0, f"build_prompt avg {avg:.3f} ms >= 10 ms"
    parse_avg, _, _ = latency_stats(log.latencies, "Action Interface")
    assert parse_avg < 1.0, f"parse_action avg {parse_avg:.3f} ms >= 1 ms"
    for module in MID_MODULES:
        mod_avg, _, _ = latency_stats(log.latencies, module)
        assert mod_avg < 5.0, f"{module} avg {mod_avg:.3f} ms >= 5 ms"
    assert elapsed < 120.0, f"run took {elapsed:.1f} s, budget 120 s"
    print(f"\nACCEPTANCE 01 PASS latency bounds ({elapsed:.1f}s for 1000 cycles)")


def test_criterion_02_accuracy_reproduction(tmp_path):
    """Scripted replay of all six trips: 100% accuracy on five modules."""
    for name in SIX_TRIPS:
        spec = trip(name)
        log = run(spec, RuleAgent())
        path = log.write(tmp_path / f"{name}.ndjson")
        replayed, _ = replay(path)
        report = compute_metrics(replayed, spec)
        for module in FIVE_EXACT_MODULES:
            row = report.module(module)
            assert row.checked > 0, f"{name}: {module} had nothing to check"
            assert row.accuracy == 100.0, (
                f"{name}: {module} accuracy {row.accuracy} != 100"
            )
    print("\nACCEPTANCE 02 PASS accuracy 100% on scripted replay of six trips")


def test_criterion_03_six_trip_decision_table():
    """Rule agent reproduces the six narrated trip decisions exactly."""
    decisions = {}
    for name in SIX_TRIPS:
        spec = trip(name)
        log = run(spec, RuleAgent())
        report = compute_metrics(log, spec)
        assert report.meta["expectation_failures"] == [], (
            name, report.meta["expectation_failures"]
        )
        after = [d for d in log.decisions if d.t_virtual >= 6.0 and not d.held]
        decisions[name] = after

    kp = lambda d: d.applied_longitudinal[0]
    c_speed = lambda d: d.applied_lateral[2]
    w_lat = lambda d: d.applied_lateral[0]

    assert any(d.applied_behavior == "overtake" for d in decisions["highway_trip1"])
    h2 = decisions["highway_trip2"][0]
    assert h2.applied_behavior == "following" and kp(h2) < 1.1 and c_speed(h2) > 2.0
    i1 = decisions["intersection_trip1"][0]
    assert i1.applied_behavior == "following" and kp(i1) > 1.1
    i2 = decisions["intersection_trip2"][0]
    assert i2.applied_behavior == "following" and kp(i2) < 1.1 and c_speed(i2) > 2.0
    p1 = decisions["parking_trip1"][0]
    assert p1.applied_behavior == "following" and w_lat(p1) > 0.2
    p2 = decisions["parking_trip2"][0]
    assert p2.applied_behavior == "following"
    assert w_lat(p2) < w_lat(p1), "parking trip 2 must track looser than trip 1"
    assert kp(p2) > kp(p1), "parking trip 2 must respond faster than trip 1"
    print("\nACCEPTANCE 03 PASS six-trip decision table")


def test_criterion_04_pid_oracle():
    """Incremental PID matches the summation form to 1e-12 relative."""
    gains = PidGains(1.1, 0.02, 0.01)
    u, _ = pid_speed_control(2.0, PidState(dt=0.1), gains)
    assert abs(u - 2.404) <= 1e-12, f"reference fixture gave {u!r}"

    rng = np.random.default_rng(20240809)
    checked = 0
    for _ in range(200):
        n = int(rng.integers(1, 101))
        errors = rng.uniform(-5.0, 5.0, n)
        g = PidGains(*rng.uniform(0.0, 2.0, 3))
        dt = float(rng.uniform(0.01, 0.5))
        state = PidState(dt=dt)
        for k in range(n):
            u, state = pid_speed_control(
                float(errors[k]), state, g, a_max=math.inf, integral_limit=math.inf
            )
            integral = float(np.sum(errors[: k + 1])) * dt
            prev = float(errors[k - 1]) if k else 0.0
            brute = g.Kp * errors[k] + g.Ki * integral + g.Kd * (errors[k] - prev) / dt
            tol = 1e-12 * max(1.0, abs(brute))
            assert abs(u - brute) <= tol, f"PID mismatch at step {k}: {u} vs {brute}"
            checked += 1
    print(f"\nACCEPTANCE 04 PASS PID oracle ({checked} steps over 200 sequences)")


def _rollout_cost(err0, v, kappas, weights, wheelbase, u_seq):
    e, psi = err0
    a = weights.dt * v
    b = weights.dt * v / wheelbase
    r = 1.0 + weights.c_speed * v
    cost = 0.0
    for k in range(weights.horizon):
        cost += weights.w_lat * e * e + weights.w_head * psi * psi + r * float(u_seq[k]) ** 2
        e, psi = e + a * psi, psi + b * float(u_seq[k]) - weights.dt * v * kappas[k]
    cost += weights.terminal_weight * (weights.w_lat * e * e + weights.w_head * psi * psi)
    return cost


def _grid_best_cost(err0, v, kappas, weights, wheelbase, delta_max, step=0.001):
    grid = np.arange(-delta_max, delta_max + step / 2, step)
    seqs = np.array(list(itertools.product(grid, repeat=weights.horizon)))
    e = np.full(len(seqs), err0[0])
    psi = np.full(len(seqs), err0[1])
    a = weights.dt * v
    b = weights.dt * v / wheelbase
    r = 1.0 + weights.c_speed * v
    cost = np.zeros(len(seqs))
    for k in range(weights.horizon):
        u = seqs[:, k]
        cost += weights.w_lat * e**2 + weights.w_head * psi**2 + r * u**2
        e, psi = e + a * psi, psi + b * u - weights.dt * v * kappas[k]
    cost += weights.terminal_weight * (weights.w_lat * e**2 + weights.w_head * psi**2)
    return float(np.min(cost))


def test_criterion_05_mpc_optimality():
    """DP cost never exceeds any grid-enumerated sequence; zero case exact."""
    assert (
        mpc_lateral_control(
            (0.0, 0.0), 10.0,
            [0.0] * 12,
            MpcWeights(0.2, 0.35, 2.0, horizon=12, dt=0.1, terminal_weight=5.0),
            2.8, 0.6,
        )
        == 0.0
    )
    rng = np.random.default_rng(55)
    instances = 0
    for n in (1, 2, 3):
        for _ in range(20):
            weights = MpcWeights(
                w_lat=float(rng.uniform(0.05, 2.0)),
                w_head=float(rng.uniform(0.05, 2.0)),
                c_speed=float(rng.uniform(0.0, 5.0)),
                horizon=n,
                dt=float(rng.uniform(0.05, 0.2)),
                terminal_weight=float(rng.uniform(1.0, 10.0)),
            )
            v = float(rng.uniform(0.0, 15.0))
            err0 = (float(rng.uniform(-0.05, 0.05)), float(rng.uniform(-0.05, 0.05)))
            kappas = rng.uniform(-0.01, 0.01, n).tolist()
            delta_max = 0.02
            seq = mpc_input_sequence(err0, v, kappas, weights, 2.8)
            dp_cost = _rollout_cost(err0, v, kappas, weights, 2.8, seq)
            grid_cost = _grid_best_cost(err0, v, kappas, weights, 2.8, delta_max)
            assert dp_cost <= grid_cost + 1e-9, (
                f"N={n}: DP cost {dp_cost} exceeds grid best {grid_cost}"
            )
            instances += 1
    print(f"\nACCEPTANCE 05 PASS MPC optimality ({instances} instances, 0.001 rad grid)")


def test_criterion_06_closed_loop_tracking():
    """1 m offset: inside 0.1 m within 8 s, overshoot < 0.25 m; w_lat x4 no worse."""
    spec = tracking_spec()
    log = run(spec, ScriptedAgent([HOLD_FOLLOWING]))
    lateral = ego_lateral(log)
    assert lateral[0][1] == pytest.approx(1.0)
    settled = [y for t, y in lateral if t >= 8.0]
    assert settled and max(abs(y) for y in settled) < 0.1
    assert min(y for _, y in lateral) > -0.25, "overshoot beyond 0.25 m on the far side"

    def rms_for(w_lat):
        reply = render_action(
            ActionVector("following", (w_lat, 0.35, 2.0), (1.1, 0.02, 0.01), "hold")
        )
        ys = [y for _, y in ego_lateral(run(spec, ScriptedAgent([reply])))]
        return math.sqrt(sum(y * y for y in ys) / len(ys))

    base_rms = rms_for(0.2)
    heavy_rms = rms_for(0.8)
    assert heavy_rms <= base_rms * (1 + 1e-9), (
        f"w_lat x4 increased RMS: {heavy_rms} > {base_rms}"
    )
    print(
        f"\nACCEPTANCE 06 PASS closed-loop tracking "
        f"(rms {base_rms:.4f} -> {heavy_rms:.4f} with w_lat x4)"
    )


def test_criterion_07_safety_clamp_fuzz():
    """10,000 random actions: refined params always in range; selection safe."""
    rng = np.random.default_rng(777)
    for _ in range(10_000):
        action = ActionVector(
            behavior="anything",
            lateral=tuple(rng.uniform(-1e4, 1e4, 3)),
            longitudinal=tuple(rng.uniform(-1e4, 1e4, 3)),
        )
        gains, weights, _ = refine_motion_control(action)
        applied = {
            "Kp": gains.Kp, "Ki": gains.Ki, "Kd": gains.Kd,
            "w_lat": weights.w_lat, "w_head": weights.w_head, "c_speed": weights.c_speed,
        }
        for name, value in applied.items():
            lo, hi = SAFETY_RANGES[name]
            assert lo <= value <= hi

    ids = ("overtake", "yield", "following")
    current = make_trajectory("current_safe")
    for _ in range(10_000):
        unsafe = tuple(bid for bid in ids if rng.random() < 0.5)
        options = tuple(
            BehaviorOption(make_trajectory(bid), safe=bid not in unsafe) for bid in ids
        )
        bset = BehaviorSet(options=options)
        requested = str(rng.choice(ids + ("teleport", "stop")))
        action = ActionVector(requested, (0.2, 0.35, 2.0), (1.1, 0.02, 0.01))
        chosen, violation = select_behavior(action, bset, current)
        option = bset.get(chosen.behavior_id)
        if chosen is not current:
            assert option is not None and option.safe
        else:
            assert violation is not None or requested == "current_safe"
    print("\nACCEPTANCE 07 PASS safety clamp fuzz (2 x 10,000 cases)")


def test_criterion_08_parser_round_trip_fuzz():
    """10,000 in-grammar round trips; 10,000 arbitrary byte strings, no crash."""
    rng = np.random.default_rng(888)
    behaviors = ["following", "overtake", "yield", "stop_and_wait", "u_turn"]
    for _ in range(10_000):
        action = ActionVector(
            behavior=str(rng.choice(behaviors)),
            lateral=tuple(float(x) for x in rng.uniform(-1e3, 1e3, 3)),
            longitudinal=tuple(float(x) for x in rng.uniform(-1e3, 1e3, 3)),
            rationale="fuzzed decision" if rng.random() < 0.5 else "",
        )
        assert parse_action(render_action(action)) == action

    for _ in range(10_000):
        n = int(rng.integers(0, 300))
        blob = rng.integers(0, 256, n, dtype=np.uint8).tobytes()
        result = parse_action(blob.decode("latin-1"))
        assert isinstance(result, (ActionVector, ParseFailure))
    print("\nACCEPTANCE 08 PASS parser round-trip and totality fuzz (2 x 10,000)")


def test_criterion_09_determinism_and_replay(tmp_path):
    """Equal seeds give byte-identical stripped logs; replay passes, all trips."""
    from drivebench.harness.cli import main as cli_main

    for name in SIX_TRIPS:
        spec = trip(name)
        log_a = run(spec, RuleAgent())
        log_b = run(spec, RuleAgent())
        lines_a = wall_invariant_lines(log_a.records())
        lines_b = wall_invariant_lines(log_b.records())
        assert lines_a == lines_b, f"{name}: runs differ after wall stripping"
        path = log_a.write(tmp_path / f"{name}.ndjson")
        assert cli_main(["replay", str(path)]) == 0, f"{name}: replay subcommand failed"
    print("\nACCEPTANCE 09 PASS determinism + replay subcommand on all six trips")


def test_criterion_10_remote_fault_tolerance(chat_server):
    """Timeouts on cycles 2 and 4 never break the loop or change the plan."""
    server = chat_server(
        plan=["echo", "sleep", "echo", "sleep", "echo"],
        reply_text=HOLD_FOLLOWING,
        sleep_s=0.8,
    )
    from dataclasses import replace

    config = replace(BenchConfig(), agent_deadline_ms=250.0)
    agent = RemoteAgent(
        RemoteConfig(endpoint=server.endpoint, model="test", max_retries=0)
    )
    spec = trip("highway_trip1", duration=15.0)
    log = run(spec, agent, config=config)

    outcomes = [d.outcome for d in log.decisions]
    assert outcomes == ["ok", "timeout", "ok", "timeout", "ok"], outcomes
    assert sum(1 for o in outcomes if o == "timeout") == 2
    for i in (1, 3):  # the timeout cycles hold the previous plan verbatim
        prev, held = log.decisions[i - 1], log.decisions[i]
        assert held.held
        assert held.applied_behavior == prev.applied_behavior
        assert held.applied_lateral == prev.applied_lateral
        assert held.applied_longitudinal == prev.applied_longitudinal
    print("\nACCEPTANCE 10 PASS remote fault tolerance (2 timeouts, plan latched)")


def test_criterion_11_resource_report_well_formed(tmp_path):
    """Resource samples in [0,100] with GPU pinned at 0; table byte-stable."""
    from dataclasses import replace

    config = replace(BenchConfig(), trace_memory=True)
    spec = trip("intersection_trip2")
    log = run(spec, RuleAgent(), config=config)
    assert log.resources, "run produced no resource samples"
    for sample in log.resources:
        assert 0.0 <= sample.R_cpu <= 100.0
        assert 0.0 <= sample.R_mem <= 100.0
        assert sample.R_gpu == 0.0
    report = compute_metrics(log, spec, config)
    assert _format_table(report) == _format_table(report)
    p1 = emit_report(report, "table", tmp_path / "a")
    p2 = emit_report(report, "table", tmp_path / "b")
    assert p1.read_bytes() == p2.read_bytes()
    header = p1.read_text().splitlines()
    idx = next(i for i, l in enumerate(header) if l.startswith("Module"))
    assert header[idx].split("  ")[0].strip() == "Module"
    print("\nACCEPTANCE 11 PASS resource report well-formedness")
