"""Template persistence: validated workflows with lineage and content hashes."""

from __future__ import annotations

import hashlib
import json
import sqlite3
import threading
import uuid
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .model import Workflow, canonical_json, validate, workflow_from_json

_SCHEMA = """
CREATE TABLE IF NOT EXISTS templates (
    template_id TEXT PRIMARY KEY,
    name TEXT NOT NULL,
    workflow_json TEXT NOT NULL,
    lineage TEXT NOT NULL DEFAULT '',
    created_at TEXT NOT NULL,
    content_hash TEXT NOT NULL
);
"""


@dataclass(frozen=True)
class TemplateRecord:
    template_id: str
    name: str
    workflow_json: str
    lineage: str  # parent template_id, empty for originals
    created_at: str
    content_hash: str

    def workflow(self) -> Workflow:
        return workflow_from_json(self.workflow_json)


def content_hash(w: Workflow) -> str:
    return hashlib.sha256(canonical_json(w).encode("utf-8")).hexdigest()


class TemplateStore:
    """Sqlite-backed template library; ":memory:" for ephemeral use."""

    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock:
            self._conn.executescript(_SCHEMA)
            self._conn.commit()

    def close(self) -> None:
        self._conn.close()

    def save(self, name: str, workflow: Workflow, lineage: str = "") -> TemplateRecord:
        """Store a validated workflow; lineage must name an existing template.

        Lineage is fixed at creation and always points at a pre-existing
        record, so the provenance chain cannot form a cycle.
        """
        if not name.strip():
            raise ValueError("template name must not be empty")
        report = validate(workflow)
        if not report.ok:
            raise ValueError(f"template workflow is not valid: {report.summary()}")
        if lineage and self.get(lineage) is None:
            raise ValueError(f"unknown parent template {lineage!r}")
        record = TemplateRecord(
            template_id=uuid.uuid4().hex,
            name=name.strip(),
            workflow_json=canonical_json(workflow),
            lineage=lineage,
            created_at=datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z",
            content_hash=content_hash(workflow),
        )
        with self._lock:
            self._conn.execute(
                "INSERT INTO templates VALUES (?, ?, ?, ?, ?, ?)",
                (
                    record.template_id,
                    record.name,
                    record.workflow_json,
                    record.lineage,
                    record.created_at,
                    record.content_hash,
                ),
            )
            self._conn.commit()
        return record

    def get(self, template_id: str) -> TemplateRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT template_id, name, workflow_json, lineage, created_at, content_hash"
                " FROM templates WHERE template_id = ?",
                (template_id,),
            ).fetchone()
        return TemplateRecord(*row) if row else None

    def list(self) -> list[TemplateRecord]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT template_id, name, workflow_json, lineage, created_at, content_hash"
                " FROM templates ORDER BY created_at, template_id"
            ).fetchall()
        return [TemplateRecord(*row) for row in rows]


def record_to_dict(record: TemplateRecord, *, include_workflow: bool = True) -> dict:
    d = {
        "template_id": record.template_id,
        "name": record.name,
        "lineage": record.lineage,
        "created_at": record.created_at,
        "content_hash": record.content_hash,
    }
    if include_workflow:
        d["workflow"] = json.loads(record.workflow_json)
    return d
