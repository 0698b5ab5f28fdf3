import threading

import pytest

from cwb.clock import RealClock, SimulatedClock
from cwb.kernel import Kernel


class TestManualMode:
    def test_timers_fire_in_time_then_ident_order(self):
        kernel = Kernel(SimulatedClock(0.0))
        fired = []
        kernel.call_at(5.0, lambda: fired.append("b"), ident="b")
        kernel.call_at(5.0, lambda: fired.append("a"), ident="a")
        kernel.call_at(1.0, lambda: fired.append("z"), ident="z")
        kernel.advance_to(10.0)
        assert fired == ["z", "a", "b"]

    def test_cancelled_timer_never_fires(self):
        kernel = Kernel(SimulatedClock(0.0))
        fired = []
        handle = kernel.call_at(1.0, lambda: fired.append(1))
        handle.cancel()
        kernel.advance_to(5.0)
        assert fired == []

    def test_advance_runs_intermediate_timers(self):
        kernel = Kernel(SimulatedClock(0.0))
        seen = []
        kernel.call_at(1.0, lambda: seen.append(kernel.clock.now()))
        kernel.call_at(2.0, lambda: seen.append(kernel.clock.now()))
        kernel.advance_to(3.0)
        assert seen == [1.0, 2.0]
        assert kernel.clock.now() == 3.0

    def test_run_to_quiescence_ignores_recurring(self):
        kernel = Kernel(SimulatedClock(0.0))
        ticks = []

        def tick():
            ticks.append(kernel.clock.now())
            kernel.call_after(10.0, tick, recurring=True)

        kernel.call_after(10.0, tick, recurring=True)
        kernel.call_at(3.0, lambda: None)
        kernel.run_to_quiescence()
        assert kernel.clock.now() == 3.0
        assert ticks == []

    def test_run_sync_executes_command(self):
        kernel = Kernel(SimulatedClock(0.0))
        assert kernel.run_sync(lambda: 41 + 1) == 42

    def test_command_exception_propagates(self):
        kernel = Kernel(SimulatedClock(0.0))
        with pytest.raises(ValueError):
            kernel.run_sync(lambda: (_ for _ in ()).throw(ValueError("boom")))

    def test_timer_scheduled_by_timer_fires_same_advance(self):
        kernel = Kernel(SimulatedClock(0.0))
        order = []
        kernel.call_at(1.0, lambda: (order.append("first"),
                                     kernel.call_at(2.0, lambda: order.append("second"))))
        kernel.advance_to(5.0)
        assert order == ["first", "second"]


class TestThreadedMode:
    def test_submit_and_timers_on_real_clock(self):
        kernel = Kernel(RealClock())
        kernel.start()
        try:
            assert kernel.run_sync(lambda: threading.current_thread().name) == "cwb-kernel"
            fired = threading.Event()
            kernel.call_after(0.05, fired.set)
            assert fired.wait(timeout=5)
        finally:
            kernel.stop()

    def test_stop_drains_pending_commands(self):
        kernel = Kernel(RealClock())
        kernel.start()
        done = []
        kernel.submit(lambda: done.append(1))
        kernel.stop()
        assert done == [1]
