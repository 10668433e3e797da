"""Command line entry point.

Subcommands: run a scenario with a chosen agent, validate a scenario file,
re-emit a report from a run log, and replay a run log against itself.
Exit codes: 0 success, 1 scenario/input error, 2 expectation or replay
mismatch.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import yaml

from drivebench.agents import RemoteAgent, RemoteConfig, RuleAgent, ScriptedAgent
from drivebench.defaults import load_config
from drivebench.harness.loop import run
from drivebench.harness.metrics import MetricsReport, compute_metrics, emit_report
from drivebench.harness.replay import ReplayMismatchError, replay
from drivebench.harness.scenario import (
    ScenarioError,
    bundled_scenario_path,
    bundled_scenarios,
    load_scenario,
)
from drivebench.runtime import read_records

EXIT_OK = 0
EXIT_SCENARIO_ERROR = 1
EXIT_MISMATCH = 2


def _resolve_scenario(arg: str) -> Path:
    path = Path(arg)
    if path.exists():
        return path
    return bundled_scenario_path(arg)


def _load_script(path: str) -> list[str]:
    raw = yaml.safe_load(Path(path).read_text())
    if isinstance(raw, dict) and "replies" in raw:
        raw = raw["replies"]
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise ValueError(f"{path}: script file must be a list of reply strings")
    return raw


def _build_agent(choice: str, config):
    if choice == "rule":
        return RuleAgent()
    if choice == "remote":
        return RemoteAgent(
            RemoteConfig(
                endpoint=config.remote_endpoint,
                model=config.remote_model,
                token_env=config.remote_token_env,
                max_retries=config.remote_max_retries,
            )
        )
    if choice.startswith("scripted:"):
        return ScriptedAgent(_load_script(choice.split(":", 1)[1]))
    raise ValueError(f"unknown agent {choice!r}; use rule, scripted:<file>, or remote")


def _cmd_run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.trace_memory:
        from dataclasses import replace

        config = replace(config, trace_memory=True)
    try:
        spec = load_scenario(_resolve_scenario(args.scenario))
    except ScenarioError as exc:
        print(f"scenario error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    if args.seed is not None:
        from drivebench.harness.scenario import scenario_from_record

        record = dict(spec.to_record(), seed=args.seed)
        spec = scenario_from_record(record)

    agent = _build_agent(args.agent, config)
    log = run(spec, agent, config=config)
    report = compute_metrics(log, spec, config)
    log.metrics_record = report.to_record()

    out_dir = Path(args.out) / f"{spec.name}-seed{spec.seed}"
    log_path = log.write(out_dir / "runlog.ndjson")
    table_path = emit_report(report, "table", out_dir)
    csv_path = emit_report(report, "csv", out_dir)
    print(f"run log: {log_path}")
    print(f"report:  {table_path}")
    print(f"csv:     {csv_path}")

    failures = report.meta.get("expectation_failures", [])
    if failures:
        for failure in failures:
            print(f"expectation mismatch: {failure}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        spec = load_scenario(_resolve_scenario(args.scenario))
    except ScenarioError as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    behaviors = ", ".join(t.behavior_id for t in spec.library.candidates(spec.map_label))
    print(
        f"ok: {spec.name} map={spec.map_label} duration={spec.duration}s "
        f"cadence={spec.cadence}s seed={spec.seed} behaviors=[{behaviors}]"
    )
    return EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        records = read_records(args.runlog)
    except (OSError, ValueError) as exc:
        print(f"cannot read run log: {exc}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    metrics = [r for r in records if r.get("kind") == "metrics"]
    if not metrics:
        print("run log carries no metrics record", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    report = MetricsReport.from_record(metrics[-1])
    path = emit_report(report, args.format, args.out)
    print(f"report: {path}")
    return EXIT_OK


def _cmd_replay(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    try:
        replay(args.runlog, config=config)
    except ReplayMismatchError as exc:
        for mismatch in exc.mismatches:
            print(f"replay mismatch: {mismatch}", file=sys.stderr)
        return EXIT_MISMATCH
    except (OSError, ValueError, ScenarioError) as exc:
        print(f"replay error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR
    print("replay ok: decision sequence identical")
    return EXIT_OK


def _cmd_list(_args: argparse.Namespace) -> int:
    for name in bundled_scenarios():
        print(name)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivebench",
        description="Closed-loop scenario bench for language-model-guided driving.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario with an agent")
    p_run.add_argument("scenario", help="scenario file or bundled scenario name")
    p_run.add_argument(
        "--agent", default="rule", help="rule | scripted:<file> | remote"
    )
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default="runs")
    p_run.add_argument("--config", default=None)
    p_run.add_argument("--trace-memory", action="store_true")
    p_run.set_defaults(fn=_cmd_run)

    p_val = sub.add_parser("validate", help="check a scenario file")
    p_val.add_argument("scenario")
    p_val.set_defaults(fn=_cmd_validate)

    p_rep = sub.add_parser("report", help="emit a report from a run log")
    p_rep.add_argument("runlog")
    p_rep.add_argument("--format", choices=("table", "csv"), default="table")
    p_rep.add_argument("--out", default="runs")
    p_rep.set_defaults(fn=_cmd_report)

    p_replay = sub.add_parser("replay", help="re-run a log and compare decisions")
    p_replay.add_argument("runlog")
    p_replay.add_argument("--config", default=None)
    p_replay.set_defaults(fn=_cmd_replay)

    p_list = sub.add_parser("list", help="list bundled scenarios")
    p_list.set_defaults(fn=_cmd_list)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCENARIO_ERROR


if __name__ == "__main__":
    sys.exit(main())
