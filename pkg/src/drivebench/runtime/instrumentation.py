"""Per-module latency, CPU, and memory instrumentation.

Latency is the wall-clock gap between a module receiving its input and
handing the result to the next layer. CPU share per module is accumulated
from process-CPU timers around each instrumented span; memory deltas come
from tracemalloc when tracing is enabled. GPU utilization is reported as a
constant 0: nothing in the bench runs on-box neural inference.
"""

from __future__ import annotations

import statistics
import time
import tracemalloc
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator


@dataclass(frozen=True)
class LatencySample:
    """One wall-latency measurement for a module, in milliseconds."""

    module: str
    L_ms: float
    t_virtual: float = 0.0

    def __post_init__(self) -> None:
        if self.L_ms < 0:
            raise ValueError(f"latency must be non-negative, got {self.L_ms}")


@dataclass(frozen=True)
class ResourceSample:
    """Resource utilization percentages for one module."""

    module: str
    R_cpu: float
    R_mem: float
    R_gpu: float = 0.0

    def __post_init__(self) -> None:
        for name in ("R_cpu", "R_mem", "R_gpu"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise ValueError(f"{name} must be in [0, 100], got {value}")


def measure_latency(
    module: str, t_wall_in: int, t_wall_out: int, t_virtual: float = 0.0
) -> LatencySample:
    """Build a latency sample from a wall-clock interval in nanoseconds."""
    if t_wall_out < t_wall_in:
        raise ValueError(
            f"clock misuse for {module}: t_wall_out {t_wall_out} < t_wall_in {t_wall_in}"
        )
    return LatencySample(module, (t_wall_out - t_wall_in) / 1e6, t_virtual)


def resource_utilization(
    module: str,
    t_module_cpu: float,
    t_total_cpu: float,
    m_module: float,
    m_total: float,
) -> ResourceSample:
    """Compute CPU and memory utilization percentages for one module.

    Both ratios are part/total * 100; GPU is fixed at 0 in simulation.
    """
    if t_total_cpu <= 0 or m_total <= 0:
        raise ValueError("totals must be positive")
    if t_module_cpu > t_total_cpu or m_module > m_total:
        raise ValueError("module share cannot exceed the total")
    if t_module_cpu < 0 or m_module < 0:
        raise ValueError("module shares must be non-negative")
    return ResourceSample(
        module=module,
        R_cpu=t_module_cpu / t_total_cpu * 100.0,
        R_mem=m_module / m_total * 100.0,
        R_gpu=0.0,
    )


def latency_stats(
    samples: list[LatencySample] | tuple[LatencySample, ...], module: str
) -> tuple[float, float, float]:
    """(mean, population std, max) of a module's latency samples, in ms."""
    values = [s.L_ms for s in samples if s.module == module]
    if not values:
        raise ValueError(f"no latency samples for module {module!r}")
    return (statistics.fmean(values), statistics.pstdev(values), max(values))


class _Span:
    __slots__ = ("t_wall_in", "t_wall_out")

    def __init__(self) -> None:
        self.t_wall_in = 0
        self.t_wall_out = 0


class Instrumentation:
    """Collects spans around module operation bodies for one run."""

    def __init__(self, trace_memory: bool = False) -> None:
        self.latencies: list[LatencySample] = []
        self.cpu_ns: dict[str, int] = {}
        self.mem_bytes: dict[str, int] = {}
        self.trace_memory = trace_memory
        self._started_tracing = False
        if trace_memory and not tracemalloc.is_tracing():
            tracemalloc.start()
            self._started_tracing = True
        self._cpu_origin = time.process_time_ns()

    @contextmanager
    def span(self, module: str, t_virtual: float = 0.0) -> Iterator[_Span]:
        """Measure one operation body; records latency and CPU share."""
        handle = _Span()
        mem0 = tracemalloc.get_traced_memory()[0] if self.trace_memory else 0
        cpu0 = time.process_time_ns()
        handle.t_wall_in = time.monotonic_ns()
        try:
            yield handle
        finally:
            handle.t_wall_out = time.monotonic_ns()
            self.latencies.append(
                measure_latency(module, handle.t_wall_in, handle.t_wall_out, t_virtual)
            )
            self.cpu_ns[module] = self.cpu_ns.get(module, 0) + (
                time.process_time_ns() - cpu0
            )
            if self.trace_memory:
                delta = tracemalloc.get_traced_memory()[0] - mem0
                if delta > 0:
                    self.mem_bytes[module] = self.mem_bytes.get(module, 0) + delta

    def total_cpu_ns(self) -> int:
        return time.process_time_ns() - self._cpu_origin

    def close(self) -> None:
        if self._started_tracing and tracemalloc.is_tracing():
            tracemalloc.stop()

    def resource_samples(
        self, modules: list[str] | tuple[str, ...], m_total: float
    ) -> list[ResourceSample]:
        """One resource sample per module over the run window so far."""
        total_cpu = self.total_cpu_ns()
        samples = []
        for module in modules:
            part = min(self.cpu_ns.get(module, 0), total_cpu)
            samples.append(
                resource_utilization(
                    module,
                    t_module_cpu=part / 1e9,
                    t_total_cpu=max(total_cpu, 1) / 1e9,
                    m_module=min(self.mem_bytes.get(module, 0), m_total),
                    m_total=m_total,
                )
            )
        return samples
