"""Local-process driver: a "VM" is a sandbox directory plus a process slot.

This is the only driver that does genuine disk I/O, so it is the vehicle
for real end-to-end runs. Package installation is recorded in a sandbox
manifest instead of touching the host system; everything else (file sync,
shell steps, the runner callback) is real. Conventional /cwb/... paths
are mapped inside the sandbox.
"""

from __future__ import annotations

import hashlib
import os
import shutil
import signal
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from ..model import VmSpec
from . import (
    READY, RELEASED,
    ConnectionLost, Driver, DriverHost, ExecResult, FilePayload,
    PayloadTooLarge, ReleaseFailed, ResourceHandle, SyncReport,
)

MAX_PAYLOAD_BYTES = 32 * 1024 * 1024
PACKAGE_MANIFEST = "cwb/packages.txt"
STEP_MARKERS = "cwb/steps.txt"
RUN_LOG = "cwb/run.log"


def hash_tree(root: str | Path) -> str:
    """Content hash over every file under root (paths + bytes), order-stable."""
    digest = hashlib.sha256()
    root = Path(root)
    for path in sorted(p for p in root.rglob("*") if p.is_file()):
        digest.update(str(path.relative_to(root)).encode())
        digest.update(b"\0")
        digest.update(path.read_bytes())
        digest.update(b"\0")
    return digest.hexdigest()


@dataclass
class _Sandbox:
    handle: ResourceHandle
    root: Path
    procs: list = field(default_factory=list)
    log_offset: int = 0


class LocalDriver(Driver):
    provider_id = "local"

    def __init__(self, host: DriverHost, root: str | None = None, command_timeout_s: float = 600.0):
        self.host = host
        self.command_timeout_s = command_timeout_s
        self._root = Path(root) if root else Path(tempfile.mkdtemp(prefix="cwb-local-"))
        self._root.mkdir(parents=True, exist_ok=True)
        self._sandboxes: dict[str, _Sandbox] = {}
        self._handles: dict[str, ResourceHandle] = {}

    def sandbox_path(self, handle: ResourceHandle) -> Path:
        return Path(handle.endpoint["path"])

    def _sandbox(self, handle: ResourceHandle) -> _Sandbox:
        handle.require_live()
        box = self._sandboxes.get(handle.id)
        if box is None or handle.status != READY:
            raise ConnectionLost(f"{handle.id} has no shell endpoint")
        return box

    def _map_path(self, box: _Sandbox, path: str) -> Path:
        return box.root / path.lstrip("/")

    # -- contract -----------------------------------------------------------

    def acquire(self, spec: VmSpec, execution_id: str) -> list[ResourceHandle]:
        vm_id = self.host.new_handle_id()
        root = self._root / vm_id
        (root / "cwb").mkdir(parents=True)
        vm = ResourceHandle(id=vm_id, provider=self.provider_id, execution_id=execution_id,
                            role=spec.role, kind="vm", endpoint={"path": str(root)})
        self._handles[vm.id] = vm
        self._sandboxes[vm.id] = _Sandbox(handle=vm, root=root)
        handles = [vm]
        for key in sorted(spec.extra_resources):
            kind = "address" if "address" in key or key.endswith("_ip") else "block_storage"
            volume = root / "volumes" / key
            volume.mkdir(parents=True, exist_ok=True)
            extra = ResourceHandle(id=self.host.new_handle_id(), provider=self.provider_id,
                                   execution_id=execution_id, role=spec.role, kind=kind,
                                   endpoint={"path": str(volume), "request": key,
                                             "size": spec.extra_resources[key]})
            self._handles[extra.id] = extra
            handles.append(extra)
        # a local sandbox is usable as soon as it exists
        self.host.kernel.call_at(self.host.kernel.clock.now(),
                                 lambda hs=tuple(handles): self._mark_ready(hs), ident=vm.id)
        return handles

    def _mark_ready(self, handles: tuple[ResourceHandle, ...]) -> None:
        for handle in handles:
            if handle.status != RELEASED:
                handle.status = READY
                self.host.handle_ready(handle)

    def _env(self, box: _Sandbox) -> dict[str, str]:
        return {
            "PATH": "/usr/local/bin:/usr/bin:/bin",
            "HOME": str(box.root),
            "LANG": "C",
            "CWB_ROOT": str(box.root),
        }

    def _read_lines(self, path: Path) -> set[str]:
        if not path.exists():
            return set()
        return {line for line in path.read_text().splitlines() if line}

    def _append_line(self, path: Path, line: str) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a") as fh:
            fh.write(line + "\n")

    def exec(self, handle: ResourceHandle, command: str, mode: str = "blocking") -> ExecResult | None:
        box = self._sandbox(handle)
        parts = command.split()
        if parts and parts[0] == "pkg-install":
            manifest = box.root / PACKAGE_MANIFEST
            if parts[1] not in self._read_lines(manifest):
                self._append_line(manifest, parts[1])
            return ExecResult(0)
        if parts and parts[0] == "pkg-query":
            present = parts[1] in self._read_lines(box.root / PACKAGE_MANIFEST)
            return ExecResult(0 if present else 1)
        if parts and parts[0] == "step-done":
            done = parts[1] in self._read_lines(box.root / STEP_MARKERS)
            return ExecResult(0 if done else 1)
        if parts and parts[0] == "step-mark":
            markers = box.root / STEP_MARKERS
            if parts[1] not in self._read_lines(markers):
                self._append_line(markers, parts[1])
            return ExecResult(0)

        shell_command = command.replace("/cwb/", "cwb/")
        if mode == "fire_and_forget":
            log = self._map_path(box, RUN_LOG)
            log.parent.mkdir(parents=True, exist_ok=True)
            out = log.open("ab")
            proc = subprocess.Popen(
                ["/bin/sh", "-c", shell_command], cwd=box.root, env=self._env(box),
                stdout=out, stderr=subprocess.STDOUT, start_new_session=True)
            out.close()
            box.procs.append(proc)
            return None
        try:
            completed = subprocess.run(
                ["/bin/sh", "-c", shell_command], cwd=box.root, env=self._env(box),
                capture_output=True, text=True, timeout=self.command_timeout_s)
        except subprocess.TimeoutExpired:
            raise ConnectionLost(f"command exceeded {self.command_timeout_s}s timeout: {command}")
        return ExecResult(completed.returncode, completed.stdout, completed.stderr)

    def sync(self, handle: ResourceHandle, files: dict[str, FilePayload]) -> SyncReport:
        box = self._sandbox(handle)
        report = SyncReport()
        for path, payload in files.items():
            data = payload.content.encode()
            if len(data) > MAX_PAYLOAD_BYTES:
                raise PayloadTooLarge(f"{path}: {len(data)} bytes")
            target = self._map_path(box, path)
            if not target.exists():
                outcome = "created"
            elif target.read_bytes() != data or bool(target.stat().st_mode & 0o111) != payload.executable:
                outcome = "updated"
            else:
                outcome = "unchanged"
            if outcome != "unchanged":
                target.parent.mkdir(parents=True, exist_ok=True)
                target.write_bytes(data)
                if payload.executable:
                    target.chmod(target.stat().st_mode | 0o755)
            report.outcomes[path] = outcome
        return report

    def drain_output(self, handle: ResourceHandle) -> list[str]:
        box = self._sandboxes.get(handle.id)
        if box is None:
            return []
        log = self._map_path(box, RUN_LOG)
        if not log.exists():
            return []
        data = log.read_bytes()[box.log_offset:]
        if not data:
            return []
        box.log_offset += len(data)
        return data.decode(errors="replace").splitlines()

    def release(self, handle: ResourceHandle) -> None:
        if handle.status == RELEASED:
            return
        box = self._sandboxes.get(handle.id)
        if box is not None:
            for proc in box.procs:
                if proc.poll() is None:
                    try:
                        os.killpg(os.getpgid(proc.pid), signal.SIGKILL)
                    except (ProcessLookupError, PermissionError):
                        pass
                    proc.wait(timeout=10)
            if handle.kind == "vm":
                try:
                    shutil.rmtree(box.root, ignore_errors=False)
                except OSError as exc:
                    raise ReleaseFailed(f"could not tear down sandbox {box.root}: {exc}")
                self._sandboxes.pop(handle.id, None)
        handle.status = RELEASED

    def unreleased(self) -> list[ResourceHandle]:
        return sorted((h for h in self._handles.values() if h.status != RELEASED),
                      key=lambda h: h.id)

    def adopt(self, handle: ResourceHandle) -> None:
        self._handles[handle.id] = handle
        if handle.kind == "vm" and handle.status != RELEASED:
            root = Path(handle.endpoint.get("path", ""))
            if root.exists():
                self._sandboxes[handle.id] = _Sandbox(handle=handle, root=root)
                handle.status = READY
