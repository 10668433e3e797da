"""Virtual simulation clock.

Simulation and scheduling run on virtual time so runs are repeatable;
wall time is only sampled for latency measurements.
"""

from __future__ import annotations

import time


class SimClock:
    """Monotone virtual clock, starting at 0 for every run."""

    def __init__(self) -> None:
        self._virtual_now = 0.0
        self.wall_origin = time.time()

    @property
    def virtual_now(self) -> float:
        return self._virtual_now

    def advance(self, dt: float) -> float:
        """Advance virtual time by dt seconds and return the new time."""
        if dt < 0:
            raise ValueError(f"cannot advance clock by negative dt: {dt}")
        self._virtual_now += dt
        return self._virtual_now

    def advance_to(self, t: float) -> float:
        """Jump forward to an absolute virtual time."""
        if t < self._virtual_now:
            raise ValueError(
                f"virtual time must not decrease: {self._virtual_now} -> {t}"
            )
        self._virtual_now = t
        return self._virtual_now
