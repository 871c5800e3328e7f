"""Workflow generalization.

Two-step pipeline over an existing workflow: the identifier call replaces
task-specific literals in node names and prompts with declared semantic
placeholders, and the filler call re-instantiates those placeholders from
a user instruction. Between the steps the placeholder declarations are
audited mechanically, with one corrective retry before giving up.
"""

from __future__ import annotations

import json
import re
from dataclasses import replace
from typing import Any

from .gateway import CONTRACTS, LlmGateway, LlmRequest, build_request
from .generation import coerce_action_info, coerce_context_info, coerce_node
from .model import (
    FillNote,
    SemanticVariable,
    Workflow,
    copy_workflow,
    validate,
    workflow_to_dict,
)

# UPPER_SNAKE_CASE tokens of at least 4 characters; the length floor keeps
# short prose acronyms ("US", "NYC") from counting as placeholders.
PLACEHOLDER_NAME_RE = re.compile(r"^[A-Z][A-Z0-9_]{3,}$")
PLACEHOLDER_TOKEN_RE = re.compile(r"\b[A-Z][A-Z0-9_]{3,}\b")

_PATH_RE = re.compile(r"^nodes\[(?P<node>.+)\]\.(?:(?P<field>name)|prompt#(?P<occ>\d+))$")


class GeneralizationError(Exception):
    """A generalization step produced unusable output."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def _coerce_variables(obj: Any) -> list[SemanticVariable]:
    if not isinstance(obj, list):
        return []
    out: list[SemanticVariable] = []
    for item in obj:
        if not isinstance(item, dict):
            continue
        paths = item.get("paths")
        examples = item.get("example_values")
        out.append(
            SemanticVariable(
                placeholder=str(item.get("placeholder", "")),
                semantic_description=str(item.get("semantic_description", "")),
                paths=[str(p) for p in paths] if isinstance(paths, list) else [],
                example_values=[str(v) for v in examples] if isinstance(examples, list) else [],
            )
        )
    return out


def _coerce_notes(obj: Any) -> list[FillNote]:
    if not isinstance(obj, list):
        return []
    out: list[FillNote] = []
    for item in obj:
        if not isinstance(item, dict):
            continue
        out.append(
            FillNote(
                placeholder=str(item.get("placeholder", "")),
                decision=str(item.get("decision", "")),
                source=str(item.get("source", "")),
            )
        )
    return out


def _semantic_from_reply(reply: dict, base: Workflow) -> Workflow:
    """Tolerant parse of identifier output; sections the reply omits are
    carried over from the workflow being generalized."""
    try:
        nodes = [coerce_node(n) for n in reply.get("nodes", [])]
    except ValueError as exc:
        raise GeneralizationError("semanticize", str(exc)) from exc
    carried = copy_workflow(base)
    return Workflow(
        timestamp=str(reply.get("timestamp", base.timestamp)),
        context_info=coerce_context_info(reply["context_info"])
        if isinstance(reply.get("context_info"), dict)
        else carried.context_info,
        action_info=coerce_action_info(reply["action_info"])
        if isinstance(reply.get("action_info"), dict)
        else carried.action_info,
        nodes=nodes,
        semantic_variables=_coerce_variables(reply.get("semantic_variables")),
    )


def _filled_from_reply(reply: dict) -> Workflow:
    try:
        nodes = [coerce_node(n) for n in reply.get("nodes", [])]
    except ValueError as exc:
        raise GeneralizationError("instantiate", str(exc)) from exc
    if not isinstance(reply.get("context_info"), dict) or not isinstance(
        reply.get("action_info"), dict
    ):
        raise GeneralizationError("instantiate", "context_info/action_info are not objects")
    return Workflow(
        timestamp=str(reply.get("timestamp", "")),
        context_info=coerce_context_info(reply["context_info"]),
        action_info=coerce_action_info(reply["action_info"]),
        nodes=nodes,
        semantic_variables=_coerce_variables(reply["semantic_variables"])
        if "semantic_variables" in reply
        else None,
        fill_notes=_coerce_notes(reply.get("fill_notes")),
    )


def placeholder_tokens(w: Workflow) -> set[str]:
    """All placeholder-shaped tokens in node names and prompts."""
    found: set[str] = set()
    for node in w.nodes:
        found.update(PLACEHOLDER_TOKEN_RE.findall(node.name))
        found.update(PLACEHOLDER_TOKEN_RE.findall(node.prompt))
    return found


def audit_placeholders(w: Workflow) -> list[str]:
    """Mechanical checks on a semantic workflow's placeholder declarations.

    Every placeholder-shaped token in the nodes must be declared, every
    declaration must be used, carry at least one example value, and list
    only paths that resolve to a real occurrence.
    """
    problems: list[str] = []
    declared: dict[str, SemanticVariable] = {}
    for var in w.semantic_variables or []:
        if not PLACEHOLDER_NAME_RE.match(var.placeholder):
            problems.append(
                f"placeholder name {var.placeholder!r} is not UPPER_SNAKE_CASE of length >= 4"
            )
            continue
        if var.placeholder in declared:
            problems.append(f"placeholder {var.placeholder} is declared twice")
            continue
        declared[var.placeholder] = var

    node_map = {n.name: n for n in w.nodes}
    seen = placeholder_tokens(w)
    for token in sorted(seen - set(declared)):
        problems.append(f"token {token} appears in nodes but is not declared")

    for name, var in declared.items():
        if name not in seen:
            problems.append(f"declared placeholder {name} does not appear in any node")
        if not var.paths:
            problems.append(f"declared placeholder {name} lists no paths")
        if not var.example_values:
            problems.append(f"declared placeholder {name} has no example values")
        elif len(var.example_values) > 3:
            problems.append(f"declared placeholder {name} has more than 3 example values")
        for path in var.paths:
            m = _PATH_RE.match(path)
            if m is None:
                problems.append(f"{name}: path {path!r} is not in nodes[<name>].name/.prompt#<n> form")
                continue
            node = node_map.get(m.group("node"))
            if node is None:
                problems.append(f"{name}: path {path!r} references an unknown node")
                continue
            if m.group("field") == "name":
                if name not in node.name:
                    problems.append(f"{name}: path {path!r} does not resolve")
            elif node.prompt.count(name) <= int(m.group("occ")):
                problems.append(f"{name}: path {path!r} does not resolve")

    report = validate(w)
    problems.extend(f"graph error {v.code}: {v.message}" for v in report.errors)
    return problems


def _audit_retry(request: LlmRequest, problems: list[str]) -> LlmRequest:
    note = (
        "Your previous output failed the placeholder audit: "
        + "; ".join(problems)
        + ". Return the corrected JSON object."
    )
    return replace(request, user_content=request.user_content + "\n\n" + note)


async def semanticize(
    gateway: LlmGateway,
    workflow: Workflow,
    instruction: str = "",
    model_id: str = "default",
) -> Workflow:
    """Replace demonstration literals with declared semantic placeholders."""
    slots = {
        "current_workflow": json.dumps(workflow_to_dict(workflow), ensure_ascii=False),
        "user_text": instruction,
    }
    request = build_request("identifier", slots, model_id=model_id)
    reply = await gateway.complete_validated(request, CONTRACTS["semantic_workflow"])
    semantic = _semantic_from_reply(reply, workflow)
    problems = audit_placeholders(semantic)
    if problems:
        reply = await gateway.complete_validated(
            _audit_retry(request, problems), CONTRACTS["semantic_workflow"]
        )
        semantic = _semantic_from_reply(reply, workflow)
        problems = audit_placeholders(semantic)
        if problems:
            raise GeneralizationError(
                "semanticize", "placeholder audit failed after retry: " + "; ".join(problems)
            )
    return semantic


async def instantiate(
    gateway: LlmGateway,
    semantic: Workflow,
    instruction: str,
    original: Workflow | None = None,
    model_id: str = "default",
) -> Workflow:
    """Fill a semantic workflow's placeholders for a user instruction.

    A placeholder may survive into the result only when a fill note
    documents the decision; anything else is an error. When no original
    workflow is supplied (a stored template), the semantic document
    itself serves as the source of the untouched top-level sections.
    """
    source = original if original is not None else semantic
    slots = {
        "agent1_output": json.dumps(workflow_to_dict(semantic), ensure_ascii=False),
        "user_text": json.dumps(instruction, ensure_ascii=False),
        "current_workflow": json.dumps(workflow_to_dict(source), ensure_ascii=False),
    }
    request = build_request("filler", slots, model_id=model_id)
    reply = await gateway.complete_validated(request, CONTRACTS["filled_workflow"])
    filled = _filled_from_reply(reply)
    report = validate(filled)
    if not report.ok:
        raise GeneralizationError(
            "instantiate", f"filled workflow is not a valid graph: {report.summary()}"
        )
    noted = {note.placeholder for note in filled.fill_notes or []}
    leftovers = sorted(placeholder_tokens(filled) - noted)
    if leftovers:
        raise GeneralizationError(
            "instantiate", f"unfilled placeholders without fill notes: {', '.join(leftovers)}"
        )
    return filled


async def adapt(
    gateway: LlmGateway,
    workflow: Workflow,
    instruction: str,
    model_id: str = "default",
) -> Workflow:
    """Generalize then re-instantiate a workflow for a new instruction."""
    semantic = await semanticize(gateway, workflow, instruction, model_id=model_id)
    return await instantiate(gateway, semantic, instruction, original=workflow, model_id=model_id)
