"""Drives executions through the pipeline under the lifecycle state machine.

One engine owns all executions of a server instance. Every mutation runs
inside the kernel (single logical writer per execution); public methods
are thin submit-and-wait wrappers, safe to call from API handler threads.
Preparation and postprocessing starts are bounded by slot pools with FIFO
queues; run starts borrow a preparing slot for the instant of the start
command. Deadlines and release-grace timers live on the kernel's timer
heap, so simulated-clock runs exercise every timeout path deterministically.
"""

from __future__ import annotations

import hashlib
import json
import sys
from collections import deque
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from . import provisioning
from .clock import RealClock, SimulatedClock
from .config import ServerConfig
from .kernel import Kernel, TimerHandle
from .model import BenchmarkDefinition, Execution
from .providers import (
    Driver, DriverRegistry, ProviderError, ResourceHandle, RELEASED, ReleaseFailed,
    leaked_resources as _leaked,
)
from .providers.local import LocalDriver
from .providers.simulated import FaultPlan, SimulatedDriver
from .results import ResultsService
from .scheduler import Scheduler
from .statemachine import (
    AGENT_EVENTS, FAILED_HOLD_STATES, ExecutionEvent as E, ExecutionState as S,
    IllegalTransition, allowed_events, apply_event, displayed_status, is_terminal,
)
from .store import Store


class OrchestratorError(Exception):
    pass


class BenchmarkNotFound(OrchestratorError):
    pass


class BenchmarkInactive(OrchestratorError):
    pass


class ExecutionNotFound(OrchestratorError):
    pass


class InvalidState(OrchestratorError):
    pass


class AlreadyTerminal(OrchestratorError):
    pass


class NotInDevMode(OrchestratorError):
    pass


class ResourcesAlreadyReleased(OrchestratorError):
    pass


class AuthError(OrchestratorError):
    pass


class ConflictError(OrchestratorError):
    """Agent reported an event that is illegal for the current state."""


@dataclass
class SlotPool:
    max_preparing: int
    max_postprocessing: int
    preparing: set[str] = field(default_factory=set)
    postprocessing: set[str] = field(default_factory=set)
    prep_queue: deque = field(default_factory=deque)
    run_queue: deque = field(default_factory=deque)
    post_queue: deque = field(default_factory=deque)

    def preparing_free(self) -> int:
        return self.max_preparing - len(self.preparing)

    def postprocessing_free(self) -> int:
        return self.max_postprocessing - len(self.postprocessing)


@dataclass
class _Runtime:
    """Kernel-side state of one live (non-terminal) execution."""

    execution: Execution
    benchmark: BenchmarkDefinition
    state: S | None = None
    dev_mode: bool = False
    handles: list[ResourceHandle] = field(default_factory=list)
    runner_vms: list[ResourceHandle] = field(default_factory=list)
    pending_ready: int = 0
    deadline_timer: TimerHandle | None = None
    grace_timer: TimerHandle | None = None
    seen_events: set[E] = field(default_factory=set)

    @property
    def id(self) -> str:
        return self.execution.id


class Engine:
    """The orchestrator service. Also acts as DriverHost for the drivers."""

    def __init__(self, store: Store, config: ServerConfig, kernel: Kernel | None = None):
        self.store = store
        self.config = config
        if kernel is None:
            clock = SimulatedClock(config.sim_start) if config.clock == "simulated" else RealClock()
            kernel = Kernel(clock)
        self.kernel = kernel
        self.results = ResultsService(store)
        self.recipes = provisioning.RecipeRegistry(store)
        self.scheduler = Scheduler()
        self.slots = SlotPool(config.max_preparing, config.max_postprocessing)
        self.registry = DriverRegistry()
        providers_cfg = config.providers or {}
        self.registry.register(SimulatedDriver(
            self, FaultPlan.from_doc(providers_cfg.get("simulated")),
            command_timeout_s=float((providers_cfg.get("simulated") or {}).get("command_timeout_s", 600.0))))
        local_cfg = providers_cfg.get("local") or {}
        self.registry.register(LocalDriver(
            self, root=local_cfg.get("root"),
            command_timeout_s=float(local_cfg.get("command_timeout_s", 600.0))))
        self._runtime: dict[str, _Runtime] = {}
        self._tick_timer: TimerHandle | None = None
        self._load_bundled_recipes()

    def _load_bundled_recipes(self) -> None:
        data_dir = Path(__file__).parent / "data"
        for path in sorted(data_dir.glob("*.json")):
            self.recipes.add(json.loads(path.read_text()))

    # -- lifecycle of the engine itself ------------------------------------

    def start(self) -> None:
        self.recover()
        if self.kernel.mode == "threaded":
            self.kernel.start()
        self._arm_scheduler_tick()

    def stop(self) -> None:
        if self._tick_timer:
            self._tick_timer.cancel()
        if self.kernel.mode == "threaded":
            self.kernel.stop()

    def _arm_scheduler_tick(self) -> None:
        def tick():
            self._tick_schedules()
            self._tick_timer = self.kernel.call_after(
                self.config.scheduler_tick_s, tick, ident="scheduler", recurring=True)

        self._tick_timer = self.kernel.call_at(
            self.kernel.clock.now(), tick, ident="scheduler", recurring=True)

    def _tick_schedules(self) -> None:
        now = datetime.utcfromtimestamp(self.kernel.clock.now())
        active = [(b.id, b.schedule) for b in self.store.list_benchmarks() if b.active and b.schedule]
        for benchmark_id in self.scheduler.tick(now, active):
            try:
                self._cmd_trigger(benchmark_id, "scheduled")
            except OrchestratorError:
                pass  # benchmark deleted/deactivated between listing and trigger

    # -- DriverHost --------------------------------------------------------

    def new_handle_id(self) -> str:
        return self.store.new_handle_id()

    def handle_ready(self, handle: ResourceHandle, error: str | None = None) -> None:
        rt = self._runtime.get(handle.execution_id)
        self.store.save_handle(handle.id, handle.execution_id, handle.provider, handle.role,
                               handle.kind, handle.status, handle.endpoint)
        if rt is None or rt.state is not S.PREPARING:
            return  # late readiness after a failure; release will clean up
        if error is not None:
            self._fail(rt, E.FAILED_ON_PREPARING, error)
            return
        rt.pending_ready -= 1
        self._log(rt, f"resource {handle.id} ({handle.kind}, role {handle.role}) ready")
        if rt.pending_ready == 0:
            self._provision(rt)

    def agent_notify(self, execution_id: str, event_name: str, note: str = "") -> None:
        # In-process agents (simulated driver) already run inside the kernel.
        # A real agent would get a 409 for a late/illegal event; mirror that
        # by logging and dropping instead of unwinding the timer callback.
        try:
            self._cmd_agent_event(execution_id, None, event_name, note, authed=False)
        except (ConflictError, ExecutionNotFound) as exc:
            self.store.append_log(execution_id, self.kernel.clock.now(),
                                  f"agent event {event_name} rejected: {exc}")

    def agent_submit(self, execution_id: str, metric: str, value, offset_ms: int | None = None) -> None:
        from .results import ResultsError

        try:
            rt_exec = self._execution(execution_id)
            benchmark = self._benchmark(rt_exec.benchmark_id)
            self.results.record(benchmark, rt_exec, metric, value, offset_ms,
                                self.kernel.clock.now())
        except (ResultsError, OrchestratorError) as exc:
            self.store.append_log(execution_id, self.kernel.clock.now(),
                                  f"agent submission of '{metric}' rejected: {exc}")

    def agent_submit_csv(self, execution_id: str, csv_text: str, batch_id: str) -> None:
        from .results import ResultsError

        try:
            rt_exec = self._execution(execution_id)
            benchmark = self._benchmark(rt_exec.benchmark_id)
            self.results.ingest_csv(benchmark, rt_exec, csv_text, self.kernel.clock.now(), batch_id)
        except (ResultsError, OrchestratorError) as exc:
            self.store.append_log(execution_id, self.kernel.clock.now(),
                                  f"agent csv batch {batch_id} rejected: {exc}")

    # -- public API (thread-safe) -------------------------------------------

    def trigger(self, benchmark_id: str, cause: str = "manual") -> Execution:
        return self.kernel.run_sync(lambda: self._cmd_trigger(benchmark_id, cause))

    def agent_event(self, execution_id: str, token: str | None, event_name: str,
                    note: str = "") -> dict:
        return self.kernel.run_sync(
            lambda: self._cmd_agent_event(execution_id, token, event_name, note))

    def record_metric(self, execution_id: str, token: str | None, metric: str, value,
                      offset_ms: int | None = None, batch_id: str | None = None):
        def cmd():
            execution = self._execution(execution_id)
            self._check_token(execution.id, token)
            benchmark = self._benchmark(execution.benchmark_id)
            return self.results.record(benchmark, execution, metric, value, offset_ms,
                                       self.kernel.clock.now(), batch_id=batch_id)

        return self.kernel.run_sync(cmd)

    def ingest_csv(self, execution_id: str, token: str | None, payload: str,
                   batch_id: str | None = None) -> int:
        def cmd():
            execution = self._execution(execution_id)
            self._check_token(execution.id, token)
            benchmark = self._benchmark(execution.benchmark_id)
            return self.results.ingest_csv(benchmark, execution, payload,
                                           self.kernel.clock.now(), batch_id=batch_id)

        return self.kernel.run_sync(cmd)

    def enter_dev_mode(self, execution_id: str) -> None:
        self.kernel.run_sync(lambda: self._cmd_dev_mode(execution_id, True))

    def exit_dev_mode(self, execution_id: str) -> None:
        self.kernel.run_sync(lambda: self._cmd_dev_mode(execution_id, False))

    def release_now(self, execution_id: str) -> None:
        self.kernel.run_sync(lambda: self._cmd_release_now(execution_id))

    def reprovision(self, execution_id: str) -> list[dict]:
        return self.kernel.run_sync(lambda: self._cmd_reprovision(execution_id))

    def enforce_timeouts(self, now: float | None = None) -> list[tuple[str, float]]:
        """Fire every due deadline; returns (ident, due instant) pairs in order."""
        fired = self.kernel.fire_due_timers(now)
        return [(h.ident, h.at) for h in fired]

    def leaked_resources(self) -> list[ResourceHandle]:
        terminal = {e.id for e in self.store.list_executions(terminal=True)}
        return _leaked(self.registry, terminal)

    def displayed_status_of(self, execution_id: str) -> str:
        events = [E(e["event"]) for e in self.store.get_events(execution_id)]
        return displayed_status(events)

    def allowed_actions(self, execution: Execution) -> dict:
        state = S(execution.state)
        return {
            "trigger": False,
            "enter_dev_mode": not execution.terminal and not execution.dev_mode
                              and state in (FAILED_HOLD_STATES | {S.RUNNING}),
            "exit_dev_mode": not execution.terminal and execution.dev_mode,
            "reprovision": not execution.terminal and execution.dev_mode
                           and state in FAILED_HOLD_STATES,
            "release_now": not execution.terminal and state in FAILED_HOLD_STATES,
        }

    # -- lookups -----------------------------------------------------------

    def _benchmark(self, benchmark_id: str) -> BenchmarkDefinition:
        benchmark = self.store.get_benchmark(benchmark_id)
        if benchmark is None:
            raise BenchmarkNotFound(benchmark_id)
        return benchmark

    def _execution(self, execution_id: str) -> Execution:
        execution = self.store.get_execution(execution_id)
        if execution is None:
            raise ExecutionNotFound(execution_id)
        return execution

    def _token_for(self, execution_id: str) -> str:
        return hashlib.sha256(f"{self.config.secret}:{execution_id}".encode()).hexdigest()[:40]

    def _check_token(self, execution_id: str, token: str | None) -> None:
        if token is None:
            return  # in-process caller (simulated agent / CLI via operator auth)
        if token != self.store.execution_token(execution_id):
            raise AuthError(f"bad agent token for {execution_id}")

    # -- event plumbing -------------------------------------------------------

    def _log(self, rt: _Runtime, line: str) -> None:
        self.store.append_log(rt.id, self.kernel.clock.now(), line)

    def _apply(self, rt: _Runtime, event: E, note: str = "") -> None:
        new_state = apply_event(rt.state, event, rt.dev_mode)
        rt.state = new_state
        rt.seen_events.add(event)
        if event is E.DEV_MODE_ENTERED:
            rt.dev_mode = True
        elif event is E.DEV_MODE_EXITED:
            rt.dev_mode = False
        at = self.kernel.clock.now()
        terminal = is_terminal(new_state)
        self.store.append_event(rt.id, at, event.value, note)
        self.store.update_execution(rt.id, new_state.value, rt.dev_mode, terminal)
        self._log(rt, f"event {event.value}" + (f": {note}" if note else ""))
        rt.execution.state = new_state.value
        rt.execution.dev_mode = rt.dev_mode
        rt.execution.terminal = terminal
        if terminal:
            self._retire(rt)

    def _retire(self, rt: _Runtime) -> None:
        for timer in (rt.deadline_timer, rt.grace_timer):
            if timer:
                timer.cancel()
        self.slots.preparing.discard(rt.id)
        self.slots.postprocessing.discard(rt.id)
        self._runtime.pop(rt.id, None)
        self._pump()

    # -- trigger and pipeline ---------------------------------------------------

    def _cmd_trigger(self, benchmark_id: str, cause: str) -> Execution:
        benchmark = self._benchmark(benchmark_id)
        if not benchmark.active:
            raise BenchmarkInactive(benchmark_id)
        now = self.kernel.clock.now()
        deadline = now + benchmark.timeout_minutes * 60.0
        execution = self.store.create_execution(
            benchmark_id, cause, now, deadline, self._token_for, S.WAITING_FOR_START_PREPARING.value)
        rt = _Runtime(execution=execution, benchmark=benchmark)
        self._runtime[execution.id] = rt
        self._apply(rt, E.CREATED, f"trigger: {cause}")
        rt.deadline_timer = self.kernel.call_at(
            deadline, lambda: self._deadline_fire(execution.id), ident=f"deadline:{execution.id}")
        self.slots.prep_queue.append(execution.id)
        self._pump()
        return self.store.get_execution(execution.id)

    def _pump(self) -> None:
        while self.slots.prep_queue and self.slots.preparing_free() > 0:
            rt = self._runtime.get(self.slots.prep_queue.popleft())
            if rt is None or rt.state is not S.WAITING_FOR_START_PREPARING:
                continue
            self.slots.preparing.add(rt.id)
            self._start_preparing(rt)
        while self.slots.run_queue and self.slots.preparing_free() > 0:
            # run starts borrow a preparing slot only for the start command
            rt = self._runtime.get(self.slots.run_queue.popleft())
            if rt is None or rt.state is not S.WAITING_FOR_START_RUNNING:
                continue
            self._start_run(rt)
        while self.slots.post_queue and self.slots.postprocessing_free() > 0:
            rt = self._runtime.get(self.slots.post_queue.popleft())
            if rt is None or rt.state is not S.WAITING_FOR_START_POSTPROCESSING:
                continue
            self.slots.postprocessing.add(rt.id)
            self._start_postprocessing(rt)

    def _start_preparing(self, rt: _Runtime) -> None:
        self._apply(rt, E.STARTED_PREPARING)
        rt.pending_ready = 0
        for spec in rt.benchmark.vms:
            try:
                driver = self.registry.get(spec.provider)
                handles = driver.acquire(spec, rt.id)
            except ProviderError as exc:
                self._fail(rt, E.FAILED_ON_PREPARING, f"acquire failed: {exc}")
                return
            for handle in handles:
                rt.handles.append(handle)
                rt.pending_ready += 1
                self.store.save_handle(handle.id, rt.id, handle.provider, handle.role,
                                       handle.kind, handle.status, handle.endpoint)
            self._log(rt, f"acquired {len(handles)} resource(s) for role {spec.role}")
        # readiness callbacks (driver timers) continue the pipeline

    def _driver_for(self, handle: ResourceHandle) -> Driver:
        return self.registry.get(handle.provider)

    def _provision(self, rt: _Runtime) -> list[dict] | None:
        """Apply every role's recipes. Returns step reports, or None on failure."""
        ctx_base = dict(server_url=self.config.advertised_url,
                        execution_id=rt.id, token=self.store.execution_token(rt.id),
                        python=sys.executable,
                        pythonpath=str(Path(__file__).parent.parent))
        rt.runner_vms = []
        reports: list[dict] = []
        for role in rt.benchmark.roles():
            try:
                resolved = provisioning.resolve(rt.benchmark, role, self.recipes)
            except provisioning.RecipeNotFound as exc:
                self._fail(rt, E.FAILED_ON_PREPARING, f"recipe not found: {exc}")
                return None
            vms = [h for h in rt.handles if h.role == role and h.kind == "vm"]
            for vm in vms:
                ctx = provisioning.RunnerContext(role=role, **ctx_base)
                has_runner = False
                for recipe, attributes in resolved:
                    try:
                        report = provisioning.apply_recipe(
                            recipe, attributes, self._driver_for(vm), vm, ctx)
                    except provisioning.StepFailed as exc:
                        for step in exc.report.steps:
                            self._log(rt, f"provision {recipe.ref} {step.label}: {step.outcome}")
                        self._fail(rt, E.FAILED_ON_PREPARING, f"{recipe.ref}: {exc}")
                        return None
                    except ProviderError as exc:
                        self._fail(rt, E.FAILED_ON_PREPARING, f"{recipe.ref}: {exc}")
                        return None
                    for step in report.steps:
                        self._log(rt, f"provision {recipe.ref} {step.label}: {step.outcome}")
                    reports.append(report.as_dict())
                    if any(s.kind == "render_runner" for s in report.steps):
                        has_runner = True
                if has_runner:
                    rt.runner_vms.append(vm)
        self._apply(rt, E.FINISHED_PREPARING)
        self.slots.preparing.discard(rt.id)
        self.slots.run_queue.append(rt.id)
        self._pump()
        return reports

    def _start_run(self, rt: _Runtime) -> None:
        if not rt.runner_vms:
            self._fail(rt, E.FAILED_ON_RUNNING, "no runner rendered for any role")
            return
        try:
            for vm in rt.runner_vms:
                self._driver_for(vm).exec(vm, f"{provisioning.RUNNER_PATH} run", "fire_and_forget")
        except ProviderError as exc:
            self._fail(rt, E.FAILED_ON_RUNNING, f"run start failed: {exc}")
            return
        self._apply(rt, E.STARTED_RUNNING)

    def _start_postprocessing(self, rt: _Runtime) -> None:
        self._apply(rt, E.STARTED_POSTPROCESSING)
        vm = rt.runner_vms[0]
        try:
            self._driver_for(vm).exec(vm, f"{provisioning.RUNNER_PATH} postprocess", "fire_and_forget")
        except ProviderError as exc:
            self._fail(rt, E.FAILED_ON_POSTPROCESSING, f"postprocess start failed: {exc}")

    # -- agent events --------------------------------------------------------

    def _cmd_agent_event(self, execution_id: str, token: str | None, event_name: str,
                         note: str = "", authed: bool = True) -> dict:
        if authed:
            self._check_token(execution_id, token)
        try:
            event = E(event_name)
        except ValueError:
            raise ConflictError(f"unknown event '{event_name}'") from None
        if event not in AGENT_EVENTS:
            raise ConflictError(f"event '{event_name}' is not an agent event")
        rt = self._runtime.get(execution_id)
        if rt is None:
            execution = self._execution(execution_id)
            past = {e["event"] for e in self.store.get_events(execution_id)}
            if event.value in past:
                return {"status": self.displayed_status_of(execution_id),
                        "duplicate": True, "state": execution.state}
            raise ConflictError(f"execution {execution_id} is terminal")
        try:
            self._apply(rt, event, note)
        except IllegalTransition:
            if event in rt.seen_events:
                self._log(rt, f"duplicate agent event {event.value} ignored")
                return {"status": self.displayed_status_of(execution_id),
                        "duplicate": True, "state": rt.state.value}
            raise ConflictError(
                f"event '{event.value}' illegal in state {rt.state.value}") from None
        self._after_agent_event(rt, event)
        return {"status": self.displayed_status_of(execution_id), "duplicate": False,
                "state": rt.state.value if rt.state else None}

    def _after_agent_event(self, rt: _Runtime, event: E) -> None:
        if event is E.FINISHED_RUNNING:
            if len(rt.benchmark.vms) == 1:
                # single-VM: continue immediately, bypassing the queue
                self._start_postprocessing(rt)
            else:
                self.slots.post_queue.append(rt.id)
                self._pump()
        elif event in (E.FAILED_ON_RUNNING, E.FAILED_ON_POSTPROCESSING):
            self._enter_failure(rt)
        elif event is E.FINISHED_POSTPROCESSING:
            self.slots.postprocessing.discard(rt.id)
            self._do_release(rt, emit_start=True)

    # -- failure, grace, release ------------------------------------------------

    def _fail(self, rt: _Runtime, event: E, note: str) -> None:
        self._apply(rt, event, note)
        self._enter_failure(rt)

    def _enter_failure(self, rt: _Runtime) -> None:
        self.slots.preparing.discard(rt.id)
        self.slots.postprocessing.discard(rt.id)
        if rt.grace_timer:
            rt.grace_timer.cancel()
        if not rt.dev_mode:
            grace_s = rt.benchmark.release_grace_minutes * 60.0
            rt.grace_timer = self.kernel.call_at(
                self.kernel.clock.now() + grace_s,
                lambda: self._grace_fire(rt.id), ident=f"grace:{rt.id}")
        self._pump()

    def _deadline_fire(self, execution_id: str) -> None:
        rt = self._runtime.get(execution_id)
        if rt is None:
            return
        note = "execution timeout elapsed"
        if rt.state is S.WAITING_FOR_START_PREPARING:
            self._drop_from(self.slots.prep_queue, rt.id)
            self._apply(rt, E.STARTED_PREPARING, "deadline elapsed while queued")
            self._fail(rt, E.FAILED_ON_PREPARING, note)
        elif rt.state is S.PREPARING:
            self._fail(rt, E.FAILED_ON_PREPARING, note)
        elif rt.state is S.WAITING_FOR_START_RUNNING:
            self._drop_from(self.slots.run_queue, rt.id)
            self._fail(rt, E.FAILED_ON_RUNNING, note)
        elif rt.state is S.RUNNING:
            self._fail(rt, E.RUN_TIMEOUT_ELAPSED, note)
        elif rt.state is S.WAITING_FOR_START_POSTPROCESSING:
            self._drop_from(self.slots.post_queue, rt.id)
            self._fail(rt, E.FAILED_ON_POSTPROCESSING, note)
        elif rt.state is S.POSTPROCESSING:
            self._fail(rt, E.FAILED_ON_POSTPROCESSING, note)
        # failure holds and the release phase are governed by the grace timer

    @staticmethod
    def _drop_from(queue: deque, execution_id: str) -> None:
        try:
            queue.remove(execution_id)
        except ValueError:
            pass

    def _grace_fire(self, execution_id: str) -> None:
        rt = self._runtime.get(execution_id)
        if rt is None:
            return
        rt.grace_timer = None
        if rt.dev_mode:
            return  # suspended; exit_dev_mode re-arms
        if rt.state in FAILED_HOLD_STATES:
            self._apply(rt, E.RELEASE_GRACE_ELAPSED)
            self._do_release(rt, emit_start=True)

    def _do_release(self, rt: _Runtime, emit_start: bool) -> None:
        if emit_start:
            self._apply(rt, E.STARTED_RELEASING)
        failures = []
        for handle in rt.handles:
            if handle.status == RELEASED:
                continue
            driver = self._driver_for(handle)
            for line in driver.drain_output(handle):
                self._log(rt, f"[{handle.role}] {line}")
            try:
                driver.release(handle)
            except ReleaseFailed as exc:
                failures.append(str(exc))
                self._log(rt, f"release failed for {handle.id}: {exc}")
            self.store.save_handle(handle.id, rt.id, handle.provider, handle.role,
                                   handle.kind, handle.status, handle.endpoint)
        if failures:
            self._apply(rt, E.FAILED_ON_RELEASING, "; ".join(failures))
        else:
            self._apply(rt, E.FINISHED_RELEASING_RESOURCES)

    # -- dev mode, manual release, reprovision ------------------------------------

    def _live(self, execution_id: str) -> _Runtime:
        rt = self._runtime.get(execution_id)
        if rt is None:
            execution = self._execution(execution_id)
            if execution.terminal:
                raise AlreadyTerminal(execution_id)
            raise InvalidState(f"{execution_id} has no live runtime")
        return rt

    def _cmd_dev_mode(self, execution_id: str, enter: bool) -> None:
        rt = self._live(execution_id)
        if enter:
            if rt.dev_mode:
                raise InvalidState("dev mode already active")
            if rt.state not in (FAILED_HOLD_STATES | {S.RUNNING}):
                raise InvalidState(f"cannot enter dev mode in state {rt.state.value}")
            if rt.grace_timer:
                rt.grace_timer.cancel()
                rt.grace_timer = None
            self._apply(rt, E.DEV_MODE_ENTERED)
        else:
            if not rt.dev_mode:
                raise InvalidState("dev mode not active")
            self._apply(rt, E.DEV_MODE_EXITED)
            if rt.state in FAILED_HOLD_STATES:
                self._enter_failure(rt)  # re-arm a fresh grace window

    def _cmd_release_now(self, execution_id: str) -> None:
        rt = self._live(execution_id)
        if rt.state not in FAILED_HOLD_STATES:
            raise InvalidState(f"release_now requires a failure hold, state is {rt.state.value}")
        if rt.grace_timer:
            rt.grace_timer.cancel()
            rt.grace_timer = None
        self._apply(rt, E.STARTED_RELEASING, "manual release")
        self._do_release(rt, emit_start=False)

    def _cmd_reprovision(self, execution_id: str) -> list[dict]:
        rt = self._live(execution_id)
        if not rt.dev_mode:
            raise NotInDevMode(execution_id)
        if rt.state not in FAILED_HOLD_STATES:
            raise InvalidState(f"reprovision requires a failure hold, state is {rt.state.value}")
        live_handles = [h for h in rt.handles if h.status != RELEASED]
        if not live_handles:
            raise ResourcesAlreadyReleased(execution_id)
        self._apply(rt, E.STARTED_PREPARING, "reprovision (dev mode)")
        rt.benchmark = self._benchmark(rt.benchmark.id)  # pick up edited attributes
        return self._provision(rt) or []

    # -- crash recovery -------------------------------------------------------

    def recover(self) -> None:
        """Mark executions left non-terminal by a previous process as failed
        at their phase, adopt their handles, and arm grace timers."""
        for execution in self.store.list_executions(terminal=False):
            benchmark = self.store.get_benchmark(execution.benchmark_id)
            rt = _Runtime(execution=execution, benchmark=benchmark,
                          state=S(execution.state), dev_mode=execution.dev_mode)
            rt.seen_events = {E(e["event"]) for e in self.store.get_events(execution.id)}
            for row in self.store.handles_for(execution.id):
                handle = ResourceHandle(id=row["id"], provider=row["provider"],
                                        execution_id=execution.id, role=row["role"],
                                        kind=row["kind"], status=row["status"],
                                        endpoint=json.loads(row["endpoint"]))
                if handle.status != RELEASED:
                    self.registry.get(handle.provider).adopt(handle)
                rt.handles.append(handle)
            self._runtime[execution.id] = rt
            self._log(rt, "server restart: recovering execution")
            note = "server restart during execution"
            if rt.state is S.WAITING_FOR_START_PREPARING:
                self._apply(rt, E.STARTED_PREPARING, "server restart")
                self._fail(rt, E.FAILED_ON_PREPARING, note)
            elif rt.state is S.PREPARING:
                self._fail(rt, E.FAILED_ON_PREPARING, note)
            elif rt.state in (S.WAITING_FOR_START_RUNNING, S.RUNNING):
                self._fail(rt, E.FAILED_ON_RUNNING, note)
            elif rt.state in (S.WAITING_FOR_START_POSTPROCESSING, S.POSTPROCESSING):
                self._fail(rt, E.FAILED_ON_POSTPROCESSING, note)
            elif rt.state in FAILED_HOLD_STATES:
                self._enter_failure(rt)
            elif rt.state is S.RELEASING_RESOURCES:
                self._do_release(rt, emit_start=True)
