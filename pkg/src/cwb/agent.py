"""The client agent installed on every resource.

A small standalone executable so benchmark workloads can be any program:
the rendered runner script invokes `cwb.agent run` for the workload
callback and `cwb.agent postprocess` for result extraction; custom
benchmarks can call `notify` / `submit` / `submit-csv` directly.

The agent never transitions state locally, it only reports. Every message
is idempotent under retry: state events are deduplicated server-side,
metric batches carry a batch id generated once per invocation.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
import time
import uuid
from dataclasses import dataclass
from pathlib import Path

import requests

from . import workload

RETRY_ATTEMPTS = 5
RETRY_BASE_DELAY_S = 1.0
RETRY_JITTER = 0.2


class AgentError(Exception):
    pass


class TransportError(AgentError):
    """Retryable delivery problem (connection refused, 5xx)."""


class Rejected(AgentError):
    """Server understood and said no (401/404/409/422); never retried."""

    def __init__(self, status: int, detail: str):
        self.status = status
        super().__init__(f"{status}: {detail}")


@dataclass(frozen=True)
class AgentConfig:
    server: str
    execution_id: str
    token: str
    role: str

    @classmethod
    def load(cls, root: str | Path) -> "AgentConfig":
        path = Path(root) / "cwb" / "config"
        doc = json.loads(path.read_text())
        return cls(server=doc["server"].rstrip("/"), execution_id=doc["execution_id"],
                   token=doc["token"], role=doc.get("role", ""))


def load_workload_doc(root: str | Path) -> dict:
    return json.loads((Path(root) / "cwb" / "runner.json").read_text())


class HttpTransport:
    def __init__(self, config: AgentConfig, session=None):
        self.config = config
        self.session = session or requests.Session()

    def _headers(self) -> dict:
        return {"Authorization": f"Bearer {self.config.token}"}

    def _check(self, response) -> dict:
        if response.status_code >= 500:
            raise TransportError(f"server error {response.status_code}")
        if response.status_code >= 400:
            detail = ""
            try:
                detail = response.json().get("detail", "")
            except Exception:
                detail = response.text[:200]
            raise Rejected(response.status_code, detail)
        return response.json() if response.content else {}

    def put_state(self, event: str, note: str = "") -> dict:
        url = f"{self.config.server}/agent/executions/{self.config.execution_id}/state"
        try:
            response = self.session.put(url, json={"event": event, "note": note},
                                        headers=self._headers(), timeout=30)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from None
        return self._check(response)

    def post_metric(self, metric: str, value, offset_ms: int | None, batch_id: str) -> dict:
        url = f"{self.config.server}/agent/executions/{self.config.execution_id}/metrics"
        body = {"metric": metric, "value": value, "offset_ms": offset_ms, "batch_id": batch_id}
        try:
            response = self.session.post(url, json=body, headers=self._headers(), timeout=30)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from None
        return self._check(response)

    def post_csv(self, payload: str, batch_id: str) -> dict:
        url = (f"{self.config.server}/agent/executions/{self.config.execution_id}"
               f"/metrics/csv?batch_id={batch_id}")
        headers = {**self._headers(), "Content-Type": "text/csv; charset=utf-8"}
        try:
            response = self.session.post(url, data=payload.encode(), headers=headers, timeout=60)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from None
        return self._check(response)


class Agent:
    def __init__(self, root: str | Path, transport=None, sleep=time.sleep, rng=None):
        self.root = Path(root)
        self.config = AgentConfig.load(root)
        self.transport = transport or HttpTransport(self.config)
        self.sleep = sleep
        self.rng = rng or random.Random()

    # -- delivery with bounded retry ---------------------------------------

    def _deliver(self, kind: str, send, payload: dict) -> dict:
        delay = RETRY_BASE_DELAY_S
        for attempt in range(1, RETRY_ATTEMPTS + 1):
            try:
                return send()
            except TransportError as exc:
                if attempt == RETRY_ATTEMPTS:
                    self._spool(kind, payload, str(exc))
                    raise
                jitter = 1.0 + self.rng.uniform(-RETRY_JITTER, RETRY_JITTER)
                self.sleep(delay * jitter)
                delay *= 2
        raise AssertionError("unreachable")

    def _spool(self, kind: str, payload: dict, error: str) -> None:
        """Persist an undeliverable message for manual recovery."""
        spool = self.root / "cwb" / "spool"
        spool.mkdir(parents=True, exist_ok=True)
        name = f"{int(time.time() * 1000)}-{kind}.json"
        (spool / name).write_text(json.dumps(
            {"kind": kind, "payload": payload, "error": error,
             "execution_id": self.config.execution_id}, indent=1))

    # -- protocol verbs ------------------------------------------------------

    def notify(self, event: str, note: str = "") -> dict:
        return self._deliver("notify", lambda: self.transport.put_state(event, note),
                             {"event": event, "note": note})

    def submit(self, metric: str, value, offset_ms: int | None = None) -> dict:
        batch_id = str(uuid.uuid4())
        return self._deliver(
            "submit", lambda: self.transport.post_metric(metric, value, offset_ms, batch_id),
            {"metric": metric, "value": value, "offset_ms": offset_ms})

    def submit_csv_text(self, payload: str) -> dict:
        batch_id = str(uuid.uuid4())
        return self._deliver("submit-csv", lambda: self.transport.post_csv(payload, batch_id),
                             {"rows": payload.count("\n")})

    # -- callbacks -------------------------------------------------------------

    def run_callback(self) -> int:
        """Execute the workload, then report completion or failure."""
        try:
            doc = load_workload_doc(self.root)
            summary = workload.seq_write(doc, self.root)
        except Exception as exc:  # noqa: BLE001 - any workload crash is a run failure
            try:
                self.notify("failed_on_running", f"workload error: {exc}")
            except AgentError:
                return 3
            return 1
        self.notify("finished_running", f"wrote {summary['bytes']} bytes "
                                        f"in {summary['duration_s']:.1f}s")
        return 0

    def postprocess_callback(self) -> int:
        """Extract results from the raw log and submit them."""
        doc = load_workload_doc(self.root)
        try:
            rows = workload.read_bandwidth_log(self.root, doc)
            lines = ["metric,value,offset_ms"]
            metric = doc.get("bandwidth_metric", "seq_write_bandwidth_kbps")
            lines += [f"{metric},{kbps:.3f},{offset}" for offset, kbps in rows]
            cpu_metric = doc.get("cpu_metric")
            if cpu_metric:
                self.submit(cpu_metric, workload.cpu_model())
            if rows:
                self.submit_csv_text("\n".join(lines) + "\n")
        except Rejected as exc:
            # surfaced, not retried; the server's answer is authoritative
            self.notify("failed_on_postprocessing", str(exc))
            return 1
        except Exception as exc:  # noqa: BLE001
            self.notify("failed_on_postprocessing", f"postprocess error: {exc}")
            return 1
        self.notify("finished_postprocessing")
        return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="cwb-agent", description="benchmark client agent")
    parser.add_argument("verb", choices=["run", "postprocess", "notify", "submit", "submit-csv"])
    parser.add_argument("args", nargs="*")
    parser.add_argument("--root", default=os.environ.get("CWB_ROOT", "."))
    parser.add_argument("--note", default="")
    parser.add_argument("--offset-ms", type=int, default=None)
    options = parser.parse_args(argv)

    try:
        agent = Agent(options.root)
        if options.verb == "run":
            return agent.run_callback()
        if options.verb == "postprocess":
            return agent.postprocess_callback()
        if options.verb == "notify":
            ack = agent.notify(options.args[0], options.note)
            print(json.dumps(ack))
            return 0
        if options.verb == "submit":
            ack = agent.submit(options.args[0], options.args[1], options.offset_ms)
            print(json.dumps(ack))
            return 0
        payload = Path(options.args[0]).read_text()
        ack = agent.submit_csv_text(payload)
        print(json.dumps(ack))
        return 0
    except Rejected as exc:
        print(f"rejected: {exc}", file=sys.stderr)
        return 4
    except AgentError as exc:
        print(f"delivery failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
