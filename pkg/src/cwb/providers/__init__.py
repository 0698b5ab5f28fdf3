"""Provider drivers: uniform acquire / exec / sync / release contract.

Two drivers ship: a deterministic fault-injecting simulated cloud and a
local-process driver whose "VM" is a sandboxed working directory. Real
cloud drivers are an extension point behind the same contract and are
deliberately not included.

Acquire is non-blocking: handles come back in `requested` status and the
driver signals readiness later through the host (a timer on the injected
clock), so timeout paths run deterministically under simulated time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

from ..kernel import Kernel
from ..model import VmSpec


class ProviderError(Exception):
    pass


class QuotaExceeded(ProviderError):
    pass


class ProviderUnavailable(ProviderError):
    pass


class AcquireFailed(ProviderError):
    pass


class ReadinessTimeout(ProviderError):
    pass


class ConnectionLost(ProviderError):
    pass


class PayloadTooLarge(ProviderError):
    pass


class ReleaseFailed(ProviderError):
    pass


class OperationOnReleased(ProviderError):
    pass


REQUESTED = "requested"
READY = "ready"
RELEASED = "released"


@dataclass
class ResourceHandle:
    id: str
    provider: str
    execution_id: str
    role: str
    kind: str  # vm | block_storage | address
    status: str = REQUESTED
    endpoint: dict = field(default_factory=dict)

    def require_live(self) -> None:
        if self.status == RELEASED:
            raise OperationOnReleased(f"{self.id} is released")


@dataclass
class ExecResult:
    exit_code: int
    stdout: str = ""
    stderr: str = ""


@dataclass
class SyncReport:
    outcomes: dict[str, str] = field(default_factory=dict)  # path -> created|updated|unchanged

    @property
    def changed(self) -> bool:
        return any(v != "unchanged" for v in self.outcomes.values())


@dataclass
class FilePayload:
    content: str
    executable: bool = False


class DriverHost(Protocol):
    """What a driver needs from its process: time, ids, and the agent ingress.

    The simulated driver replays the whole agent protocol in-process, so
    the same ingress the gateway exposes over HTTP is injected here.
    """

    kernel: Kernel

    def new_handle_id(self) -> str: ...

    def handle_ready(self, handle: ResourceHandle, error: str | None = None) -> None: ...

    def agent_notify(self, execution_id: str, event_name: str, note: str = "") -> None: ...

    def agent_submit(self, execution_id: str, metric: str, value, offset_ms: int | None = None) -> None: ...

    def agent_submit_csv(self, execution_id: str, csv_text: str, batch_id: str) -> None: ...


class Driver:
    """Driver contract. Operations on one handle are serialized by callers;
    operations on distinct handles may run concurrently."""

    provider_id: str = ""

    def acquire(self, spec: VmSpec, execution_id: str) -> list[ResourceHandle]:
        raise NotImplementedError

    def exec(self, handle: ResourceHandle, command: str, mode: str = "blocking") -> ExecResult | None:
        raise NotImplementedError

    def sync(self, handle: ResourceHandle, files: dict[str, FilePayload]) -> SyncReport:
        raise NotImplementedError

    def release(self, handle: ResourceHandle) -> None:
        raise NotImplementedError

    def unreleased(self) -> list[ResourceHandle]:
        raise NotImplementedError

    def adopt(self, handle: ResourceHandle) -> None:
        """Re-register a persisted handle after a process restart."""
        raise NotImplementedError

    def drain_output(self, handle: ResourceHandle) -> list[str]:
        """New output lines produced by fire-and-forget commands, if any."""
        return []


class DriverRegistry:
    def __init__(self):
        self._drivers: dict[str, Driver] = {}

    def register(self, driver: Driver) -> None:
        self._drivers[driver.provider_id] = driver

    def get(self, provider_id: str) -> Driver:
        try:
            return self._drivers[provider_id]
        except KeyError:
            raise ProviderUnavailable(f"no driver registered for provider '{provider_id}'") from None

    def ids(self) -> tuple[str, ...]:
        return tuple(sorted(self._drivers))

    def all(self) -> list[Driver]:
        return [self._drivers[k] for k in sorted(self._drivers)]


def leaked_resources(registry: DriverRegistry, terminal_execution_ids: set[str]) -> list[ResourceHandle]:
    """Audit: handles never released although their owning execution ended."""
    leaked = []
    for driver in registry.all():
        for handle in driver.unreleased():
            if handle.execution_id in terminal_execution_ids:
                leaked.append(handle)
    return sorted(leaked, key=lambda h: h.id)
