"""Persistent execution sessions.

Node results land in an append-only sqlite history table; replaying the
history reconstructs the in-memory results map exactly, which is what
lets an interrupted execution keep its partial results.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from dataclasses import dataclass
from pathlib import Path

STATUSES = ("succeeded", "failed", "skipped")

_SCHEMA = """
CREATE TABLE IF NOT EXISTS node_results (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    session_id TEXT NOT NULL,
    execution_id TEXT NOT NULL,
    node_name TEXT NOT NULL,
    status TEXT NOT NULL,
    output TEXT NOT NULL,
    started TEXT NOT NULL,
    finished TEXT NOT NULL,
    actions_json TEXT NOT NULL,
    UNIQUE (session_id, execution_id, node_name)
);
"""


@dataclass(frozen=True)
class ActionRecord:
    """One driver invocation made on a node's behalf."""

    tool: str
    detail: str
    ok: bool


@dataclass(frozen=True)
class NodeResult:
    node_name: str
    status: str
    output: str
    started: str
    finished: str
    actions_taken: tuple[ActionRecord, ...] = ()

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.finished < self.started:
            raise ValueError(f"{self.node_name}: finished {self.finished} < started {self.started}")


def result_to_dict(r: NodeResult) -> dict:
    return {
        "node_name": r.node_name,
        "status": r.status,
        "output": r.output,
        "started": r.started,
        "finished": r.finished,
        "actions_taken": [
            {"tool": a.tool, "detail": a.detail, "ok": a.ok} for a in r.actions_taken
        ],
    }


def result_from_dict(obj: dict) -> NodeResult:
    return NodeResult(
        node_name=obj["node_name"],
        status=obj["status"],
        output=obj["output"],
        started=obj["started"],
        finished=obj["finished"],
        actions_taken=tuple(
            ActionRecord(a["tool"], a["detail"], bool(a["ok"])) for a in obj.get("actions_taken", [])
        ),
    )


class SessionStore:
    """Sqlite-backed store; ":memory:" gives an ephemeral store for tests."""

    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        # The service layer touches the store from worker threads.
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock:
            self._conn.executescript(_SCHEMA)
            self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    def append(self, session_id: str, execution_id: str, result: NodeResult) -> None:
        row = (
            session_id,
            execution_id,
            result.node_name,
            result.status,
            result.output,
            result.started,
            result.finished,
            json.dumps(result_to_dict(result)["actions_taken"]),
        )
        with self._lock:
            try:
                self._conn.execute(
                    "INSERT INTO node_results (session_id, execution_id, node_name,"
                    " status, output, started, finished, actions_json)"
                    " VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
                    row,
                )
            except sqlite3.IntegrityError:
                raise ValueError(
                    f"node {result.node_name!r} already recorded for execution {execution_id!r}"
                ) from None
            self._conn.commit()

    def history(
        self, session_id: str, execution_id: str | None = None
    ) -> list[tuple[str, NodeResult]]:
        """(execution_id, result) pairs in commit order."""
        query = (
            "SELECT execution_id, node_name, status, output, started, finished, actions_json"
            " FROM node_results WHERE session_id = ?"
        )
        args: list[str] = [session_id]
        if execution_id is not None:
            query += " AND execution_id = ?"
            args.append(execution_id)
        query += " ORDER BY seq"
        with self._lock:
            rows = self._conn.execute(query, args).fetchall()
        out: list[tuple[str, NodeResult]] = []
        for eid, name, status, output, started, finished, actions_json in rows:
            actions = tuple(
                ActionRecord(a["tool"], a["detail"], bool(a["ok"]))
                for a in json.loads(actions_json)
            )
            out.append(
                (eid, NodeResult(name, status, output, started, finished, actions))
            )
        return out

    def results_map(self, session_id: str, execution_id: str) -> dict[str, NodeResult]:
        return {
            result.node_name: result
            for _, result in self.history(session_id, execution_id)
        }


class Session:
    """One demonstration session's execution history."""

    def __init__(self, session_id: str, store: SessionStore | None = None):
        self.session_id = session_id
        self.store = store if store is not None else SessionStore()

    def append(self, execution_id: str, result: NodeResult) -> None:
        self.store.append(self.session_id, execution_id, result)

    def history(self, execution_id: str | None = None) -> list[tuple[str, NodeResult]]:
        return self.store.history(self.session_id, execution_id)

    def results_map(self, execution_id: str) -> dict[str, NodeResult]:
        return self.store.results_map(self.session_id, execution_id)
