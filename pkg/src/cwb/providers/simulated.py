"""Deterministic simulated cloud driver.

Faults, latencies, and synthetic metrics all derive from one seed, so a
given (seed, execution id) pair always produces the same behavior
sequence. The driver also plays the agent's part: when the runner
callback is exec'd fire-and-forget it schedules completion (or an
injected failure) on the clock, and on the postprocess callback it
submits a synthetic bandwidth series through the same ingress a real
agent would use.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field

from ..model import VmSpec
from . import (
    READY, RELEASED, REQUESTED,
    AcquireFailed, ConnectionLost, Driver, DriverHost, ExecResult, FilePayload,
    OperationOnReleased, PayloadTooLarge, ReleaseFailed, ResourceHandle, SyncReport,
)


@dataclass(frozen=True)
class SyntheticBandwidth:
    mean_kbps: float = 3500.0
    oscillation: float = 0.3  # amplitude as a fraction of the mean
    drop_prob: float = 0.02  # per-sample probability of a sudden drop
    period_s: float = 30.0

    @classmethod
    def from_doc(cls, doc: dict | None) -> "SyntheticBandwidth":
        doc = doc or {}
        return cls(
            mean_kbps=float(doc.get("mean_kbps", 3500.0)),
            oscillation=float(doc.get("oscillation", 0.3)),
            drop_prob=float(doc.get("drop_prob", 0.02)),
            period_s=float(doc.get("period_s", 30.0)),
        )


@dataclass(frozen=True)
class FaultPlan:
    seed: int = 0
    acquire_failure_prob: float = 0.0
    provision_failure_prob: float = 0.0
    run_failure_prob: float = 0.0
    release_failure_prob: float = 0.0
    acquire_latency: tuple[float, float] = (1.0, 5.0)
    synthetic_bandwidth: SyntheticBandwidth = field(default_factory=SyntheticBandwidth)

    def __post_init__(self):
        for name in ("acquire_failure_prob", "provision_failure_prob",
                     "run_failure_prob", "release_failure_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"{name} must be within [0, 1], got {p}")

    @classmethod
    def from_doc(cls, doc: dict | None) -> "FaultPlan":
        doc = doc or {}
        latency = doc.get("acquire_latency", [1.0, 5.0])
        return cls(
            seed=int(doc.get("seed", 0)),
            acquire_failure_prob=float(doc.get("acquire_failure_prob", 0.0)),
            provision_failure_prob=float(doc.get("provision_failure_prob", 0.0)),
            run_failure_prob=float(doc.get("run_failure_prob", 0.0)),
            release_failure_prob=float(doc.get("release_failure_prob", 0.0)),
            acquire_latency=(float(latency[0]), float(latency[1])),
            synthetic_bandwidth=SyntheticBandwidth.from_doc(doc.get("synthetic_bandwidth")),
        )


def derived_rng(seed: int, *parts: str) -> random.Random:
    """Stable RNG independent of interpreter hash randomization."""
    digest = hashlib.sha256((f"{seed}|" + "|".join(parts)).encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def synth_bandwidth_series(sb: SyntheticBandwidth, rng: random.Random, size_bytes: int,
                           interval_ms: int = 500, max_samples: int = 200_000
                           ) -> list[tuple[int, float]]:
    """Bandwidth trace: oscillation around the mean plus sudden drops.

    Samples continue until the synthetic workload has written size_bytes.
    Returns (offset_ms, kbps) pairs.
    """
    phase = rng.uniform(0.0, 2.0 * math.pi)
    dt = interval_ms / 1000.0
    samples: list[tuple[int, float]] = []
    written = 0.0
    while written < size_bytes and len(samples) < max_samples:
        t = len(samples) * dt
        value = sb.mean_kbps * (1.0 + sb.oscillation * math.sin(2.0 * math.pi * t / sb.period_s + phase))
        value *= 1.0 + 0.05 * rng.uniform(-1.0, 1.0)
        if rng.random() < sb.drop_prob:
            value *= 0.1
        value = max(value, 1.0)
        samples.append(((len(samples) + 1) * interval_ms, value))
        written += value * 1024.0 * dt
    return samples


@dataclass
class _SimVm:
    handle: ResourceHandle
    payloads: dict[str, FilePayload] = field(default_factory=dict)
    packages: set = field(default_factory=set)
    markers: set = field(default_factory=set)
    release_attempts: int = 0


@dataclass
class _ExecutionFaults:
    provision_fails: bool
    run_fails: bool
    run_fail_fraction: float


class SimulatedDriver(Driver):
    provider_id = "simulated"

    def __init__(self, host: DriverHost, plan: FaultPlan, command_timeout_s: float = 600.0,
                 postprocess_latency_s: float = 1.0):
        self.host = host
        self.plan = plan
        self.command_timeout_s = command_timeout_s
        self.postprocess_latency_s = postprocess_latency_s
        self._vms: dict[str, _SimVm] = {}
        self._handles: dict[str, ResourceHandle] = {}
        self._faults: dict[str, _ExecutionFaults] = {}
        self._agent_series: dict[str, list[tuple[int, float]]] = {}

    # -- fault bookkeeping -------------------------------------------------

    def _faults_for(self, execution_id: str) -> _ExecutionFaults:
        faults = self._faults.get(execution_id)
        if faults is None:
            rng = derived_rng(self.plan.seed, "faults", execution_id)
            faults = _ExecutionFaults(
                provision_fails=rng.random() < self.plan.provision_failure_prob,
                run_fails=rng.random() < self.plan.run_failure_prob,
                run_fail_fraction=rng.uniform(0.1, 0.9),
            )
            self._faults[execution_id] = faults
        return faults

    # -- driver contract ----------------------------------------------------

    def acquire(self, spec: VmSpec, execution_id: str) -> list[ResourceHandle]:
        rng = derived_rng(self.plan.seed, "acquire", execution_id, spec.role)
        if rng.random() < self.plan.acquire_failure_prob:
            raise AcquireFailed(
                f"injected acquire fault for role '{spec.role}' ({spec.provider}/{spec.instance_type})")
        handles = []
        vm = ResourceHandle(id=self.host.new_handle_id(), provider=self.provider_id,
                            execution_id=execution_id, role=spec.role, kind="vm",
                            endpoint={"instance_type": spec.instance_type, "region": spec.region})
        handles.append(vm)
        self._vms[vm.id] = _SimVm(handle=vm)
        for key in sorted(spec.extra_resources):
            kind = "address" if "address" in key or key.endswith("_ip") else "block_storage"
            extra = ResourceHandle(id=self.host.new_handle_id(), provider=self.provider_id,
                                   execution_id=execution_id, role=spec.role, kind=kind,
                                   endpoint={"request": key, "size": spec.extra_resources[key]})
            handles.append(extra)
        for handle in handles:
            self._handles[handle.id] = handle
        latency = rng.uniform(*self.plan.acquire_latency)
        self.host.kernel.call_at(
            self.host.kernel.clock.now() + latency,
            lambda hs=tuple(handles): self._mark_ready(hs),
            ident=vm.id)
        return handles

    def _mark_ready(self, handles: tuple[ResourceHandle, ...]) -> None:
        for handle in handles:
            if handle.status == REQUESTED:
                handle.status = READY
                self.host.handle_ready(handle)

    def exec(self, handle: ResourceHandle, command: str, mode: str = "blocking") -> ExecResult | None:
        handle.require_live()
        vm = self._vms.get(handle.id)
        if handle.status != READY or vm is None:
            raise ConnectionLost(f"{handle.id} has no shell endpoint")
        if mode == "fire_and_forget":
            self._start_agent(vm, command)
            return None
        return self._exec_blocking(vm, command)

    def _exec_blocking(self, vm: _SimVm, command: str) -> ExecResult:
        parts = command.split()
        if parts and parts[0] == "sleep":
            # analytic stand-in for long commands: compare against the timeout
            if float(parts[1]) > self.command_timeout_s:
                raise ConnectionLost(f"command exceeded {self.command_timeout_s}s timeout: {command}")
            return ExecResult(0)
        if parts and parts[0] == "pkg-install":
            if self._provision_fault(vm):
                return ExecResult(1, stderr=f"injected provisioning fault installing {parts[1]}")
            vm.packages.add(parts[1])
            return ExecResult(0)
        if parts and parts[0] == "pkg-query":
            return ExecResult(0 if parts[1] in vm.packages else 1)
        if parts and parts[0] == "step-done":
            return ExecResult(0 if parts[1] in vm.markers else 1)
        if parts and parts[0] == "step-mark":
            vm.markers.add(parts[1])
            return ExecResult(0)
        # arbitrary shell: no filesystem to consult, so guards are never
        # satisfied here; commands themselves succeed unless a fault hits
        if self._provision_fault(vm):
            return ExecResult(1, stderr=f"injected provisioning fault running: {command}")
        return ExecResult(0, stdout="")

    def _provision_fault(self, vm: _SimVm) -> bool:
        faults = self._faults_for(vm.handle.execution_id)
        if faults.provision_fails:
            faults.provision_fails = False  # one injected failure per execution
            return True
        return False

    def sync(self, handle: ResourceHandle, files: dict[str, FilePayload]) -> SyncReport:
        handle.require_live()
        vm = self._vms.get(handle.id)
        if handle.status != READY or vm is None:
            raise ConnectionLost(f"{handle.id} has no shell endpoint")
        report = SyncReport()
        for path, payload in files.items():
            if len(payload.content.encode()) > 32 * 1024 * 1024:
                raise PayloadTooLarge(path)
            norm = path.lstrip("/")
            previous = vm.payloads.get(norm)
            if previous is None:
                report.outcomes[path] = "created"
            elif previous.content != payload.content or previous.executable != payload.executable:
                report.outcomes[path] = "updated"
            else:
                report.outcomes[path] = "unchanged"
            vm.payloads[norm] = payload
        return report

    # -- the simulated agent -------------------------------------------------

    def _payload_json(self, vm: _SimVm, path: str) -> dict:
        payload = vm.payloads.get(path.lstrip("/"))
        if payload is None:
            raise ConnectionLost(f"runner payload {path} missing on {vm.handle.id}")
        return json.loads(payload.content)

    def _start_agent(self, vm: _SimVm, command: str) -> None:
        verb = command.split()[-1]
        execution_id = vm.handle.execution_id
        if verb == "postprocess":
            self.host.kernel.call_at(
                self.host.kernel.clock.now() + self.postprocess_latency_s,
                lambda: self._agent_postprocess(vm), ident=execution_id)
            return
        config = self._payload_json(vm, "/cwb/config")
        workload = self._payload_json(vm, "/cwb/runner.json")
        faults = self._faults_for(execution_id)
        rng = derived_rng(self.plan.seed, "bandwidth", execution_id)
        series = synth_bandwidth_series(
            self.plan.synthetic_bandwidth, rng,
            size_bytes=int(workload.get("size_bytes", 1 << 20)),
            interval_ms=int(workload.get("sample_interval_ms", 500)))
        duration = series[-1][0] / 1000.0 if series else 1.0
        now = self.host.kernel.clock.now()
        if faults.run_fails:
            fail_after = max(duration * faults.run_fail_fraction, 0.5)
            self.host.kernel.call_at(
                now + fail_after,
                lambda: self.host.agent_notify(execution_id, "failed_on_running",
                                               "injected workload failure"),
                ident=execution_id)
            return
        self._agent_series[execution_id] = series
        self.host.kernel.call_at(
            now + duration,
            lambda: self.host.agent_notify(execution_id, "finished_running"),
            ident=execution_id)

    def _agent_postprocess(self, vm: _SimVm) -> None:
        execution_id = vm.handle.execution_id
        workload = self._payload_json(vm, "/cwb/runner.json")
        cpu_metric = workload.get("cpu_metric")
        if cpu_metric:
            self.host.agent_submit(execution_id, cpu_metric,
                                   f"SimCPU {vm.handle.endpoint.get('instance_type') or 'default'}")
        series = self._agent_series.pop(execution_id, [])
        bandwidth_metric = workload.get("bandwidth_metric")
        if bandwidth_metric and series:
            lines = ["metric,value,offset_ms"]
            lines += [f"{bandwidth_metric},{kbps:.3f},{offset}" for offset, kbps in series]
            self.host.agent_submit_csv(execution_id, "\n".join(lines) + "\n",
                                       batch_id=f"sim-{execution_id}")
        self.host.agent_notify(execution_id, "finished_postprocessing")

    # -- release ---------------------------------------------------------------

    def release(self, handle: ResourceHandle) -> None:
        if handle.status == RELEASED:
            return
        vm = self._vms.get(handle.id)
        attempt = vm.release_attempts if vm else 0
        if vm:
            vm.release_attempts += 1
        rng = derived_rng(self.plan.seed, "release", handle.id, str(attempt))
        if handle.status == READY and rng.random() < self.plan.release_failure_prob:
            raise ReleaseFailed(f"injected release fault for {handle.id}")
        handle.status = RELEASED

    def unreleased(self) -> list[ResourceHandle]:
        return sorted((h for h in self._handles.values() if h.status != RELEASED),
                      key=lambda h: h.id)

    def adopt(self, handle: ResourceHandle) -> None:
        self._handles[handle.id] = handle
        if handle.kind == "vm" and handle.id not in self._vms:
            self._vms[handle.id] = _SimVm(handle=handle)
