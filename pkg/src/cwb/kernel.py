"""Single-threaded execution core: command queue plus timer heap.

All state transitions in the server funnel through one kernel so every
execution has exactly one logical writer. In `threaded` mode a worker
thread processes commands and fires timers against the real clock; in
`manual` mode nothing runs until the owner pumps, which makes simulated
runs fully deterministic (same commands + same clock advances = same
processing order, always).

Timers fire ordered by (due instant, ident, arming sequence), so two
deadlines due at the same instant fire in ident order.
"""

from __future__ import annotations

import heapq
import itertools
import threading
from collections import deque
from concurrent.futures import Future
from typing import Any, Callable

from .clock import Clock, SimulatedClock


class TimerHandle:
    __slots__ = ("at", "ident", "seq", "fn", "recurring", "cancelled")

    def __init__(self, at: float, ident: str, seq: int, fn: Callable[[], None], recurring: bool):
        self.at = at
        self.ident = ident
        self.seq = seq
        self.fn = fn
        self.recurring = recurring
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True

    def sort_key(self):
        return (self.at, self.ident, self.seq)


class Kernel:
    def __init__(self, clock: Clock, mode: str | None = None):
        if mode is None:
            mode = "manual" if clock.is_simulated() else "threaded"
        if mode not in ("manual", "threaded"):
            raise ValueError(f"unknown kernel mode: {mode}")
        self.clock = clock
        self.mode = mode
        self._timers: list[tuple[tuple[float, str, int], TimerHandle]] = []
        self._commands: deque[tuple[Callable[[], Any], Future]] = deque()
        self._seq = itertools.count()
        self._cond = threading.Condition()
        self._thread: threading.Thread | None = None
        self._stopping = False
        self._in_kernel = threading.local()

    # -- scheduling ------------------------------------------------------

    def call_at(self, at: float, fn: Callable[[], None], ident: str = "", recurring: bool = False) -> TimerHandle:
        handle = TimerHandle(float(at), ident, next(self._seq), fn, recurring)
        with self._cond:
            heapq.heappush(self._timers, (handle.sort_key(), handle))
            self._cond.notify_all()
        return handle

    def call_after(self, delay: float, fn: Callable[[], None], ident: str = "", recurring: bool = False) -> TimerHandle:
        return self.call_at(self.clock.now() + delay, fn, ident, recurring)

    def submit(self, fn: Callable[[], Any]) -> Future:
        fut: Future = Future()
        with self._cond:
            if self._stopping:
                raise RuntimeError("kernel is stopped")
            self._commands.append((fn, fut))
            self._cond.notify_all()
        return fut

    def run_sync(self, fn: Callable[[], Any], timeout: float | None = 30.0) -> Any:
        """Submit a command and wait for its result.

        Never call from inside the kernel thread; kernel-side code should
        just call the target function directly.
        """
        if getattr(self._in_kernel, "active", False):
            raise RuntimeError("run_sync called from kernel thread")
        fut = self.submit(fn)
        if self.mode == "manual":
            self.pump()
            return fut.result(timeout=0)
        return fut.result(timeout=timeout)

    # -- processing ------------------------------------------------------

    def _run_command(self, fn: Callable[[], Any], fut: Future) -> None:
        self._in_kernel.active = True
        try:
            fut.set_result(fn())
        except BaseException as exc:  # result carries the error to the caller
            fut.set_exception(exc)
        finally:
            self._in_kernel.active = False

    def _pop_due_timer(self, now: float) -> TimerHandle | None:
        with self._cond:
            while self._timers:
                key, handle = self._timers[0]
                if handle.cancelled:
                    heapq.heappop(self._timers)
                    continue
                if handle.at <= now:
                    heapq.heappop(self._timers)
                    return handle
                return None
            return None

    def fire_due_timers(self, now: float | None = None) -> list[TimerHandle]:
        """Fire every pending timer due at or before `now`, in order."""
        if now is None:
            now = self.clock.now()
        fired = []
        while True:
            handle = self._pop_due_timer(now)
            if handle is None:
                return fired
            self._in_kernel.active = True
            try:
                handle.fn()
            finally:
                self._in_kernel.active = False
            fired.append(handle)

    def pump(self) -> int:
        """Process queued commands and due timers until none are left."""
        processed = 0
        while True:
            with self._cond:
                item = self._commands.popleft() if self._commands else None
            if item is not None:
                self._run_command(*item)
                processed += 1
                continue
            fired = self.fire_due_timers()
            if fired:
                processed += len(fired)
                continue
            return processed

    # -- simulated-time drivers -----------------------------------------

    def _sim_clock(self) -> SimulatedClock:
        clock = self.clock
        if not isinstance(clock, SimulatedClock):
            raise RuntimeError("advance helpers need a SimulatedClock")
        return clock

    def next_timer_at(self, include_recurring: bool = True) -> float | None:
        with self._cond:
            live = [h for _, h in self._timers if not h.cancelled and (include_recurring or not h.recurring)]
        return min(h.at for h in live) if live else None

    def advance_to(self, instant: float) -> None:
        """Advance the simulated clock to `instant`, firing everything due on the way."""
        clock = self._sim_clock()
        self.pump()
        while True:
            at = self.next_timer_at()
            if at is None or at > instant:
                break
            clock.advance_to(at)
            self.pump()
        clock.advance_to(max(instant, clock.now()))
        self.pump()

    def advance(self, seconds: float) -> None:
        self.advance_to(self._sim_clock().now() + seconds)

    def run_to_quiescence(self, max_sim_seconds: float = 10_000_000.0) -> None:
        """Advance simulated time until no commands and no one-shot timers remain.

        Recurring timers (scheduler ticks) do not count as pending work,
        and are not fired here; use advance_to for schedule-driven runs.
        """
        clock = self._sim_clock()
        horizon = clock.now() + max_sim_seconds
        self.pump()
        while True:
            at = self.next_timer_at(include_recurring=False)
            if at is None:
                return
            if at > horizon:
                raise RuntimeError("run_to_quiescence exceeded max_sim_seconds")
            clock.advance_to(max(at, clock.now()))
            self.pump()

    # -- threaded mode ----------------------------------------------------

    def start(self) -> None:
        if self.mode != "threaded":
            raise RuntimeError("start() only applies to threaded kernels")
        if self._thread is not None:
            return
        self._stopping = False
        self._thread = threading.Thread(target=self._loop, name="cwb-kernel", daemon=True)
        self._thread.start()

    def stop(self, drain: bool = True) -> None:
        if self._thread is None:
            return
        with self._cond:
            self._stopping = True
            self._cond.notify_all()
        self._thread.join(timeout=30)
        self._thread = None
        if drain:
            # finish whatever commands were queued before the stop
            while self._commands:
                self._run_command(*self._commands.popleft())

    def _loop(self) -> None:
        while True:
            with self._cond:
                if self._stopping and not self._commands:
                    return
                item = self._commands.popleft() if self._commands else None
                if item is None:
                    now = self.clock.now()
                    due = self._timers and not self._timers[0][1].cancelled and self._timers[0][1].at <= now
                    if not due:
                        wait_for = None
                        if self._timers:
                            nxt = min(h.at for _, h in self._timers if not h.cancelled) if any(
                                not h.cancelled for _, h in self._timers) else None
                            if nxt is not None:
                                wait_for = max(0.0, min(nxt - now, 1.0))
                            else:
                                wait_for = 1.0
                        self._cond.wait(timeout=wait_for if wait_for is not None else 1.0)
                        continue
            if item is not None:
                self._run_command(*item)
            else:
                self.fire_due_timers()
