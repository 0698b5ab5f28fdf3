"""Injectable time source.

Everything in the server that looks at the time (deadlines, cron ticks,
simulated provider latencies) goes through a Clock so tests can run the
whole timeout machinery in milliseconds of real time.
"""

from __future__ import annotations

import threading
import time as _time


class Clock:
    """Time source interface. now() returns epoch seconds as float."""

    def now(self) -> float:
        raise NotImplementedError

    def is_simulated(self) -> bool:
        return False


class RealClock(Clock):
    def now(self) -> float:
        return _time.time()


class SimulatedClock(Clock):
    """Manually advanced clock. Never moves unless told to.

    Advancing is owned by whoever drives the kernel (tests, sweep
    scripts); the clock itself only stores the current instant.
    """

    def __init__(self, start: float = 1_600_000_000.0):
        self._now = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        with self._lock:
            return self._now

    def advance_to(self, instant: float) -> None:
        with self._lock:
            if instant < self._now:
                raise ValueError(f"clock cannot move backwards ({instant} < {self._now})")
            self._now = instant

    def advance(self, seconds: float) -> None:
        with self._lock:
            self._now += seconds

    def is_simulated(self) -> bool:
        return True
