"""Portable workflow bundles.

A bundle is a zip holding the workflow plus a manifest describing the
execution plan, the tools it needs, and the runtime limits. Writing is
deterministic: stored entries, fixed timestamps, canonical JSON.
"""

from __future__ import annotations

import json
import zipfile
from io import BytesIO
from pathlib import Path

from ..model import Workflow, canonical_json, workflow_from_json
from .agents import DEFAULT_ACTION_BUDGET
from .planner import plan, plan_to_dict

FORMAT_VERSION = "1"
WORKFLOW_NAME = "workflow.json"
MANIFEST_NAME = "manifest.json"

# Fixed so re-exporting an unchanged workflow yields identical bytes.
_EPOCH = (1980, 1, 1, 0, 0, 0)


class BundleError(Exception):
    pass


def build_manifest(w: Workflow, *, node_timeout_s: float = 120.0) -> dict:
    p = plan(w)
    tools: set[str] = set()
    for node in w.nodes:
        tools.update(node.tools)
    return {
        "format_version": FORMAT_VERSION,
        "plan": plan_to_dict(p),
        "tools_used": sorted(tools),
        "limits": {
            "action_budget": DEFAULT_ACTION_BUDGET,
            "node_timeout_s": node_timeout_s,
        },
    }


def export_bundle(w: Workflow, path: str | Path | None = None) -> bytes:
    """Serialize the workflow and its manifest into deterministic zip bytes."""
    manifest = build_manifest(w)
    buffer = BytesIO()
    with zipfile.ZipFile(buffer, "w", zipfile.ZIP_STORED) as zf:
        for name, text in (
            (WORKFLOW_NAME, canonical_json(w)),
            (MANIFEST_NAME, json.dumps(manifest, indent=2) + "\n"),
        ):
            info = zipfile.ZipInfo(name, date_time=_EPOCH)
            info.compress_type = zipfile.ZIP_STORED
            zf.writestr(info, text)
    data = buffer.getvalue()
    if path is not None:
        Path(path).write_bytes(data)
    return data


def _open_bundle(source: str | Path | bytes) -> zipfile.ZipFile:
    raw = source if isinstance(source, bytes) else Path(source).read_bytes()
    try:
        return zipfile.ZipFile(BytesIO(raw))
    except zipfile.BadZipFile as exc:
        raise BundleError(f"not a bundle: {exc}") from exc


def read_manifest(source: str | Path | bytes) -> dict:
    with _open_bundle(source) as zf:
        if MANIFEST_NAME not in zf.namelist():
            raise BundleError(f"bundle is missing {MANIFEST_NAME}")
        try:
            manifest = json.loads(zf.read(MANIFEST_NAME))
        except json.JSONDecodeError as exc:
            raise BundleError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(manifest, dict):
        raise BundleError("manifest must be a JSON object")
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise BundleError(
            f"unsupported bundle format_version {version!r}; expected {FORMAT_VERSION!r}"
        )
    return manifest


def import_bundle(source: str | Path | bytes) -> Workflow:
    """Load the workflow from a bundle, checking the manifest version."""
    read_manifest(source)
    with _open_bundle(source) as zf:
        if WORKFLOW_NAME not in zf.namelist():
            raise BundleError(f"bundle is missing {WORKFLOW_NAME}")
        text = zf.read(WORKFLOW_NAME).decode("utf-8")
    try:
        return workflow_from_json(text)
    except ValueError as exc:
        raise BundleError(f"bundle workflow is invalid: {exc}") from exc
