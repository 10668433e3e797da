"""Scenario engine: declarative scenarios, the closed loop, metrics, replay."""

from drivebench.harness.scenario import (
    Road,
    ScenarioSpec,
    bundled_scenario_path,
    bundled_scenarios,
    load_scenario,
)
from drivebench.harness.loop import Decision, RunLog, run
from drivebench.harness.metrics import (
    TABLE_MODULES,
    MetricsReport,
    ModuleMetrics,
    compute_metrics,
    emit_report,
)
from drivebench.harness.replay import ReplayMismatchError, replay

__all__ = [
    "Decision",
    "MetricsReport",
    "ModuleMetrics",
    "ReplayMismatchError",
    "Road",
    "RunLog",
    "ScenarioSpec",
    "TABLE_MODULES",
    "bundled_scenario_path",
    "bundled_scenarios",
    "compute_metrics",
    "emit_report",
    "load_scenario",
    "replay",
    "run",
]
