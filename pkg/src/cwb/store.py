"""Embedded relational store (sqlite) for benchmarks, executions, event
logs, resource handles, observations, and recipes.

One connection guarded by a lock: writers funnel through the kernel
anyway, readers (API handlers) just need safe access. Ids are
zero-padded counters, so they sort lexicographically in creation order.
Event and log tables are append-only by API construction: nothing here
updates or deletes rows from them.
"""

from __future__ import annotations

import dataclasses
import json
import sqlite3
import threading
from contextlib import contextmanager

from .model import BenchmarkDefinition, Execution, validate_definition, to_document

_SCHEMA = """
CREATE TABLE IF NOT EXISTS counters (
    kind TEXT PRIMARY KEY,
    value INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS benchmarks (
    id TEXT PRIMARY KEY,
    doc TEXT NOT NULL,
    active INTEGER NOT NULL DEFAULT 1,
    created_at REAL NOT NULL
);
CREATE TABLE IF NOT EXISTS executions (
    id TEXT PRIMARY KEY,
    benchmark_id TEXT NOT NULL REFERENCES benchmarks(id),
    created_at REAL NOT NULL,
    deadline_at REAL NOT NULL,
    trigger_cause TEXT NOT NULL,
    state TEXT NOT NULL,
    dev_mode INTEGER NOT NULL DEFAULT 0,
    terminal INTEGER NOT NULL DEFAULT 0,
    token TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS events (
    execution_id TEXT NOT NULL REFERENCES executions(id),
    seq INTEGER NOT NULL,
    at REAL NOT NULL,
    event TEXT NOT NULL,
    note TEXT NOT NULL DEFAULT '',
    PRIMARY KEY (execution_id, seq)
);
CREATE TABLE IF NOT EXISTS logs (
    execution_id TEXT NOT NULL REFERENCES executions(id),
    seq INTEGER NOT NULL,
    at REAL NOT NULL,
    line TEXT NOT NULL,
    PRIMARY KEY (execution_id, seq)
);
CREATE TABLE IF NOT EXISTS handles (
    id TEXT PRIMARY KEY,
    execution_id TEXT NOT NULL REFERENCES executions(id),
    provider TEXT NOT NULL,
    role TEXT NOT NULL,
    kind TEXT NOT NULL,
    status TEXT NOT NULL,
    endpoint TEXT NOT NULL DEFAULT '{}'
);
CREATE TABLE IF NOT EXISTS observations (
    execution_id TEXT NOT NULL REFERENCES executions(id),
    seq INTEGER NOT NULL,
    metric TEXT NOT NULL,
    value_text TEXT,
    value_num REAL,
    offset_ms INTEGER,
    recorded_at REAL NOT NULL,
    PRIMARY KEY (execution_id, seq)
);
CREATE TABLE IF NOT EXISTS batches (
    execution_id TEXT NOT NULL,
    batch_id TEXT NOT NULL,
    count INTEGER NOT NULL,
    PRIMARY KEY (execution_id, batch_id)
);
CREATE TABLE IF NOT EXISTS recipes (
    name TEXT NOT NULL,
    version TEXT NOT NULL,
    doc TEXT NOT NULL,
    PRIMARY KEY (name, version)
);
CREATE INDEX IF NOT EXISTS idx_exec_benchmark ON executions(benchmark_id);
CREATE INDEX IF NOT EXISTS idx_obs_metric ON observations(execution_id, metric);
"""


class Store:
    def __init__(self, path: str = ":memory:"):
        self.path = path
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(path, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        with self._lock:
            self._conn.executescript(_SCHEMA)
            self._conn.execute("PRAGMA synchronous=OFF")
            self._conn.commit()

    def close(self) -> None:
        with self._lock:
            self._conn.close()

    @contextmanager
    def tx(self):
        """Transaction scope: commits on success, rolls back on error."""
        with self._lock:
            try:
                yield self._conn
                self._conn.commit()
            except BaseException:
                self._conn.rollback()
                raise

    def _next_id(self, kind: str, prefix: str) -> str:
        row = self._conn.execute("SELECT value FROM counters WHERE kind=?", (kind,)).fetchone()
        value = (row["value"] if row else 0) + 1
        self._conn.execute(
            "INSERT INTO counters(kind, value) VALUES(?, ?) "
            "ON CONFLICT(kind) DO UPDATE SET value=excluded.value",
            (kind, value))
        return f"{prefix}{value:08d}"

    # -- benchmarks -------------------------------------------------------

    def save_benchmark(self, definition: BenchmarkDefinition, created_at: float) -> BenchmarkDefinition:
        with self.tx() as conn:
            benchmark_id = self._next_id("benchmark", "b-")
            doc = json.dumps(to_document(definition), sort_keys=True)
            conn.execute(
                "INSERT INTO benchmarks(id, doc, active, created_at) VALUES(?,?,?,?)",
                (benchmark_id, doc, 1 if definition.active else 0, created_at))
        return self._definition(benchmark_id, json.loads(doc), definition.active)

    @staticmethod
    def _definition(benchmark_id: str, doc: dict, active: bool) -> BenchmarkDefinition:
        providers = tuple({vm.get("provider", "") for vm in doc.get("vms", [])})
        definition = validate_definition(doc, known_providers=providers)
        return dataclasses.replace(definition, id=benchmark_id, active=bool(active))

    def get_benchmark(self, benchmark_id: str) -> BenchmarkDefinition | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT id, doc, active FROM benchmarks WHERE id=?", (benchmark_id,)).fetchone()
        if row is None:
            return None
        return self._definition(row["id"], json.loads(row["doc"]), bool(row["active"]))

    def list_benchmarks(self) -> list[BenchmarkDefinition]:
        with self._lock:
            rows = self._conn.execute("SELECT id, doc, active FROM benchmarks ORDER BY id").fetchall()
        return [self._definition(r["id"], json.loads(r["doc"]), bool(r["active"])) for r in rows]

    def benchmark_created_at(self, benchmark_id: str) -> float | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT created_at FROM benchmarks WHERE id=?", (benchmark_id,)).fetchone()
        return row["created_at"] if row else None

    def set_benchmark_active(self, benchmark_id: str, active: bool) -> bool:
        with self.tx() as conn:
            cur = conn.execute("UPDATE benchmarks SET active=? WHERE id=?",
                               (1 if active else 0, benchmark_id))
            return cur.rowcount > 0

    # -- executions -------------------------------------------------------

    def create_execution(self, benchmark_id: str, cause: str, created_at: float,
                         deadline_at: float, token_fn, state: str) -> Execution:
        """token_fn maps the freshly assigned execution id to its agent token."""
        with self.tx() as conn:
            execution_id = self._next_id("execution", "e-")
            token = token_fn(execution_id)
            conn.execute(
                "INSERT INTO executions(id, benchmark_id, created_at, deadline_at,"
                " trigger_cause, state, dev_mode, terminal, token)"
                " VALUES(?,?,?,?,?,?,0,0,?)",
                (execution_id, benchmark_id, created_at, deadline_at, cause, state, token))
        return Execution(id=execution_id, benchmark_id=benchmark_id, created_at=created_at,
                         deadline_at=deadline_at, trigger_cause=cause, state=state)

    def get_execution(self, execution_id: str) -> Execution | None:
        with self._lock:
            row = self._conn.execute("SELECT * FROM executions WHERE id=?", (execution_id,)).fetchone()
        return self._execution(row) if row else None

    @staticmethod
    def _execution(row) -> Execution:
        return Execution(id=row["id"], benchmark_id=row["benchmark_id"],
                         created_at=row["created_at"], deadline_at=row["deadline_at"],
                         trigger_cause=row["trigger_cause"], state=row["state"],
                         dev_mode=bool(row["dev_mode"]), terminal=bool(row["terminal"]))

    def execution_token(self, execution_id: str) -> str | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT token FROM executions WHERE id=?", (execution_id,)).fetchone()
        return row["token"] if row else None

    def update_execution(self, execution_id: str, state: str, dev_mode: bool, terminal: bool) -> None:
        with self.tx() as conn:
            conn.execute("UPDATE executions SET state=?, dev_mode=?, terminal=? WHERE id=?",
                         (state, 1 if dev_mode else 0, 1 if terminal else 0, execution_id))

    def list_executions(self, benchmark_id: str | None = None, state: str | None = None,
                        created_from: float | None = None, created_to: float | None = None,
                        terminal: bool | None = None) -> list[Execution]:
        clauses, args = [], []
        if benchmark_id is not None:
            clauses.append("benchmark_id=?")
            args.append(benchmark_id)
        if state is not None:
            clauses.append("state=?")
            args.append(state)
        if created_from is not None:
            clauses.append("created_at>=?")
            args.append(created_from)
        if created_to is not None:
            clauses.append("created_at<=?")
            args.append(created_to)
        if terminal is not None:
            clauses.append("terminal=?")
            args.append(1 if terminal else 0)
        where = (" WHERE " + " AND ".join(clauses)) if clauses else ""
        with self._lock:
            rows = self._conn.execute(
                f"SELECT * FROM executions{where} ORDER BY id", args).fetchall()
        return [self._execution(r) for r in rows]

    # -- events and logs --------------------------------------------------

    def append_event(self, execution_id: str, at: float, event: str, note: str = "") -> int:
        with self.tx() as conn:
            row = conn.execute("SELECT COALESCE(MAX(seq), 0) AS m FROM events WHERE execution_id=?",
                               (execution_id,)).fetchone()
            seq = row["m"] + 1
            conn.execute("INSERT INTO events(execution_id, seq, at, event, note) VALUES(?,?,?,?,?)",
                         (execution_id, seq, at, event, note))
        return seq

    def get_events(self, execution_id: str) -> list[dict]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT seq, at, event, note FROM events WHERE execution_id=? ORDER BY seq",
                (execution_id,)).fetchall()
        return [dict(r) for r in rows]

    def append_log(self, execution_id: str, at: float, line: str) -> int:
        with self.tx() as conn:
            row = conn.execute("SELECT COALESCE(MAX(seq), 0) AS m FROM logs WHERE execution_id=?",
                               (execution_id,)).fetchone()
            seq = row["m"] + 1
            conn.execute("INSERT INTO logs(execution_id, seq, at, line) VALUES(?,?,?,?)",
                         (execution_id, seq, at, line))
        return seq

    def get_logs(self, execution_id: str, after: int = 0, limit: int = 1000) -> list[dict]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT seq, at, line FROM logs WHERE execution_id=? AND seq>? ORDER BY seq LIMIT ?",
                (execution_id, after, limit)).fetchall()
        return [dict(r) for r in rows]

    # -- resource handles -------------------------------------------------

    def new_handle_id(self) -> str:
        with self.tx():
            return self._next_id("handle", "h-")

    def save_handle(self, handle_id: str, execution_id: str, provider: str, role: str,
                    kind: str, status: str, endpoint: dict) -> None:
        with self.tx() as conn:
            conn.execute(
                "INSERT INTO handles(id, execution_id, provider, role, kind, status, endpoint)"
                " VALUES(?,?,?,?,?,?,?)"
                " ON CONFLICT(id) DO UPDATE SET status=excluded.status, endpoint=excluded.endpoint",
                (handle_id, execution_id, provider, role, kind, status, json.dumps(endpoint, sort_keys=True)))

    def update_handle_status(self, handle_id: str, status: str) -> None:
        with self.tx() as conn:
            conn.execute("UPDATE handles SET status=? WHERE id=?", (status, handle_id))

    def handles_for(self, execution_id: str) -> list[dict]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT * FROM handles WHERE execution_id=? ORDER BY id", (execution_id,)).fetchall()
        return [dict(r) for r in rows]

    def unreleased_handles(self, only_terminal_owners: bool = False) -> list[dict]:
        query = ("SELECT h.* FROM handles h JOIN executions e ON e.id = h.execution_id"
                 " WHERE h.status != 'released'")
        if only_terminal_owners:
            query += " AND e.terminal = 1"
        query += " ORDER BY h.id"
        with self._lock:
            rows = self._conn.execute(query).fetchall()
        return [dict(r) for r in rows]

    # -- observations ------------------------------------------------------

    def record_observations(self, execution_id: str, rows: list[tuple], batch_id: str | None = None) -> int:
        """rows: (metric, value_text, value_num, offset_ms, recorded_at). Atomic."""
        with self.tx() as conn:
            if batch_id is not None:
                existing = conn.execute(
                    "SELECT count FROM batches WHERE execution_id=? AND batch_id=?",
                    (execution_id, batch_id)).fetchone()
                if existing is not None:
                    return -existing["count"]  # negative marks a duplicate batch
                conn.execute("INSERT INTO batches(execution_id, batch_id, count) VALUES(?,?,?)",
                             (execution_id, batch_id, len(rows)))
            base = conn.execute(
                "SELECT COALESCE(MAX(seq), 0) AS m FROM observations WHERE execution_id=?",
                (execution_id,)).fetchone()["m"]
            for offset, (metric, value_text, value_num, offset_ms, recorded_at) in enumerate(rows, start=1):
                conn.execute(
                    "INSERT INTO observations(execution_id, seq, metric, value_text, value_num,"
                    " offset_ms, recorded_at) VALUES(?,?,?,?,?,?,?)",
                    (execution_id, base + offset, metric, value_text, value_num, offset_ms, recorded_at))
            return len(rows)

    def observations_for(self, execution_id: str, metric: str | None = None) -> list[dict]:
        query = "SELECT * FROM observations WHERE execution_id=?"
        args: list = [execution_id]
        if metric is not None:
            query += " AND metric=?"
            args.append(metric)
        query += " ORDER BY seq"
        with self._lock:
            rows = self._conn.execute(query, args).fetchall()
        return [dict(r) for r in rows]

    def observation_count(self, execution_id: str) -> int:
        with self._lock:
            row = self._conn.execute(
                "SELECT COUNT(*) AS c FROM observations WHERE execution_id=?", (execution_id,)).fetchone()
        return row["c"]

    # -- recipes ------------------------------------------------------------

    def upsert_recipe(self, name: str, version: str, doc: dict) -> None:
        with self.tx() as conn:
            conn.execute(
                "INSERT INTO recipes(name, version, doc) VALUES(?,?,?)"
                " ON CONFLICT(name, version) DO UPDATE SET doc=excluded.doc",
                (name, version, json.dumps(doc, sort_keys=True)))

    def get_recipe(self, name: str, version: str) -> dict | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT doc FROM recipes WHERE name=? AND version=?", (name, version)).fetchone()
        return json.loads(row["doc"]) if row else None

    def list_recipes(self) -> list[tuple[str, str]]:
        with self._lock:
            rows = self._conn.execute("SELECT name, version FROM recipes ORDER BY name, version").fetchall()
        return [(r["name"], r["version"]) for r in rows]
