"""Workflow document model.

A workflow is a DAG of named nodes plus the context and action analyses
it was derived from. This module owns the JSON schema (stable field
order), structural validation, the edit vocabulary, and diffing between
two workflow versions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

TOOL_VOCABULARY = ("browser.open", "browser.click", "browser.fill", "api.fetch", "browser.read")

EDIT_KINDS = ("add_node", "delete_subtree", "reconnect", "set_prompt", "set_tools")


class SchemaError(ValueError):
    """A workflow or edit document does not match the wire schema."""


class EditError(Exception):
    """Base class for edit application failures."""


class MalformedEditError(EditError):
    """The edit payload itself is unusable."""


class UnknownNodeError(EditError):
    """The edit names a node that is not in the workflow."""


class RejectedEditError(EditError):
    """Applying the edit would leave the workflow structurally invalid."""

    def __init__(self, report: "ValidationReport"):
        super().__init__(f"edit rejected: {report.summary()}")
        self.report = report


@dataclass
class ContextInfo:
    goal: str = ""
    interests: list[str] = field(default_factory=list)
    constraints: list[str] = field(default_factory=list)
    values: list[str] = field(default_factory=list)
    entities: list[str] = field(default_factory=list)


@dataclass
class ActionInfo:
    actions: list[str] = field(default_factory=list)
    sites: list[str] = field(default_factory=list)
    phases: list[str] = field(default_factory=list)
    confidence: float = 0.0


@dataclass
class WorkflowNode:
    name: str
    parent: list[str] = field(default_factory=list)
    children: list[str] = field(default_factory=list)
    tools: list[str] = field(default_factory=list)
    prompt: str = ""


@dataclass
class SemanticVariable:
    placeholder: str
    semantic_description: str
    paths: list[str]
    example_values: list[str]


@dataclass
class FillNote:
    placeholder: str
    decision: str
    source: str


@dataclass
class Workflow:
    timestamp: str
    context_info: ContextInfo
    action_info: ActionInfo
    nodes: list[WorkflowNode]
    semantic_variables: list[SemanticVariable] | None = None
    fill_notes: list[FillNote] | None = None

    def node_map(self) -> dict[str, WorkflowNode]:
        return {n.name: n for n in self.nodes}

    def edge_set(self) -> set[tuple[str, str]]:
        return {(n.name, c) for n in self.nodes for c in n.children}

    def roots(self) -> list[str]:
        return [n.name for n in self.nodes if not n.parent]

    def sinks(self) -> list[str]:
        return [n.name for n in self.nodes if not n.children]


def copy_workflow(w: Workflow) -> Workflow:
    c = w.context_info
    a = w.action_info
    return Workflow(
        timestamp=w.timestamp,
        context_info=ContextInfo(c.goal, list(c.interests), list(c.constraints), list(c.values), list(c.entities)),
        action_info=ActionInfo(list(a.actions), list(a.sites), list(a.phases), a.confidence),
        nodes=[WorkflowNode(n.name, list(n.parent), list(n.children), list(n.tools), n.prompt) for n in w.nodes],
        semantic_variables=None if w.semantic_variables is None else [
            SemanticVariable(v.placeholder, v.semantic_description, list(v.paths), list(v.example_values))
            for v in w.semantic_variables
        ],
        fill_notes=None if w.fill_notes is None else [
            FillNote(n.placeholder, n.decision, n.source) for n in w.fill_notes
        ],
    )


# ---------------------------------------------------------------------------
# Serialization. Field order is part of the wire contract.

def context_info_to_dict(c: ContextInfo) -> dict:
    return {
        "goal": c.goal,
        "interests": list(c.interests),
        "constraints": list(c.constraints),
        "values": list(c.values),
        "entities": list(c.entities),
    }


def action_info_to_dict(a: ActionInfo) -> dict:
    return {
        "actions": list(a.actions),
        "sites": list(a.sites),
        "phases": list(a.phases),
        "confidence": a.confidence,
    }


def workflow_to_dict(w: Workflow) -> dict:
    d: dict[str, Any] = {
        "timestamp": w.timestamp,
        "context_info": context_info_to_dict(w.context_info),
        "action_info": action_info_to_dict(w.action_info),
        "nodes": [
            {
                "name": n.name,
                "parent": list(n.parent),
                "children": list(n.children),
                "tools": list(n.tools),
                "prompt": n.prompt,
            }
            for n in w.nodes
        ],
    }
    if w.semantic_variables is not None:
        d["semantic_variables"] = [
            {
                "placeholder": v.placeholder,
                "semantic_description": v.semantic_description,
                "paths": list(v.paths),
                "example_values": list(v.example_values),
            }
            for v in w.semantic_variables
        ]
    if w.fill_notes is not None:
        d["fill_notes"] = [
            {"placeholder": n.placeholder, "decision": n.decision, "source": n.source}
            for n in w.fill_notes
        ]
    return d


def canonical_json(w: Workflow) -> str:
    """Byte-stable JSON text for a workflow, newline-terminated."""
    return json.dumps(workflow_to_dict(w), indent=2, ensure_ascii=False) + "\n"


def _require(obj: dict, key: str, kind: type, where: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{where}: missing {key!r}")
    v = obj[key]
    if not isinstance(v, kind):
        raise SchemaError(f"{where}.{key}: expected {kind.__name__}")
    return v


def _str_list(obj: dict, key: str, where: str) -> list[str]:
    v = _require(obj, key, list, where)
    if any(not isinstance(x, str) for x in v):
        raise SchemaError(f"{where}.{key}: expected a list of strings")
    return list(v)


def _reject_unknown(obj: dict, allowed: Iterable[str], where: str) -> None:
    extra = set(obj) - set(allowed)
    if extra:
        raise SchemaError(f"{where}: unknown fields {sorted(extra)}")


def node_from_dict(obj: Any, where: str = "node") -> WorkflowNode:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    _reject_unknown(obj, ("name", "parent", "children", "tools", "prompt"), where)
    name = _require(obj, "name", str, where)
    return WorkflowNode(
        name=name,
        parent=_str_list(obj, "parent", where),
        children=_str_list(obj, "children", where),
        tools=_str_list(obj, "tools", where),
        prompt=_require(obj, "prompt", str, where),
    )


def context_info_from_dict(obj: Any, where: str = "context_info") -> ContextInfo:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    _reject_unknown(obj, ("goal", "interests", "constraints", "values", "entities"), where)
    return ContextInfo(
        goal=_require(obj, "goal", str, where),
        interests=_str_list(obj, "interests", where),
        constraints=_str_list(obj, "constraints", where),
        values=_str_list(obj, "values", where),
        entities=_str_list(obj, "entities", where),
    )


def action_info_from_dict(obj: Any, where: str = "action_info") -> ActionInfo:
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    _reject_unknown(obj, ("actions", "sites", "phases", "confidence"), where)
    confidence = obj.get("confidence")
    if not isinstance(confidence, (int, float)) or isinstance(confidence, bool):
        raise SchemaError(f"{where}.confidence: expected a number")
    return ActionInfo(
        actions=_str_list(obj, "actions", where),
        sites=_str_list(obj, "sites", where),
        phases=_str_list(obj, "phases", where),
        confidence=float(confidence),
    )


def workflow_from_dict(obj: Any) -> Workflow:
    if not isinstance(obj, dict):
        raise SchemaError("workflow: expected an object")
    _reject_unknown(
        obj,
        ("timestamp", "context_info", "action_info", "nodes", "semantic_variables", "fill_notes"),
        "workflow",
    )
    nodes_obj = _require(obj, "nodes", list, "workflow")
    nodes = [node_from_dict(n, where=f"nodes[{i}]") for i, n in enumerate(nodes_obj)]

    semantic_variables = None
    if obj.get("semantic_variables") is not None:
        sv_obj = _require(obj, "semantic_variables", list, "workflow")
        semantic_variables = []
        for i, v in enumerate(sv_obj):
            where = f"semantic_variables[{i}]"
            if not isinstance(v, dict):
                raise SchemaError(f"{where}: expected an object")
            _reject_unknown(v, ("placeholder", "semantic_description", "paths", "example_values"), where)
            semantic_variables.append(
                SemanticVariable(
                    placeholder=_require(v, "placeholder", str, where),
                    semantic_description=_require(v, "semantic_description", str, where),
                    paths=_str_list(v, "paths", where),
                    example_values=_str_list(v, "example_values", where),
                )
            )

    fill_notes = None
    if obj.get("fill_notes") is not None:
        fn_obj = _require(obj, "fill_notes", list, "workflow")
        fill_notes = []
        for i, v in enumerate(fn_obj):
            where = f"fill_notes[{i}]"
            if not isinstance(v, dict):
                raise SchemaError(f"{where}: expected an object")
            _reject_unknown(v, ("placeholder", "decision", "source"), where)
            fill_notes.append(
                FillNote(
                    placeholder=_require(v, "placeholder", str, where),
                    decision=_require(v, "decision", str, where),
                    source=_require(v, "source", str, where),
                )
            )

    return Workflow(
        timestamp=_require(obj, "timestamp", str, "workflow"),
        context_info=context_info_from_dict(_require(obj, "context_info", dict, "workflow")),
        action_info=action_info_from_dict(_require(obj, "action_info", dict, "workflow")),
        nodes=nodes,
        semantic_variables=semantic_variables,
        fill_notes=fill_notes,
    )


def workflow_from_json(text: str) -> Workflow:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"workflow: invalid JSON: {exc}") from None
    return workflow_from_dict(obj)


# ---------------------------------------------------------------------------
# Validation.

@dataclass(frozen=True)
class Violation:
    code: str
    nodes: tuple[str, ...]
    message: str


@dataclass
class ValidationReport:
    errors: list[Violation] = field(default_factory=list)
    warnings: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def summary(self) -> str:
        if self.ok and not self.warnings:
            return "ok"
        parts = [f"{v.code}({', '.join(v.nodes)})" for v in self.errors]
        parts += [f"warning:{v.code}" for v in self.warnings]
        return "; ".join(parts)


def _topo_names(node_map: dict[str, WorkflowNode]) -> list[str]:
    """Deterministic topological order (name order within each rank)."""
    in_degree = {name: 0 for name in node_map}
    for node in node_map.values():
        for child in node.children:
            if child in in_degree:
                in_degree[child] += 1
    ready = sorted(name for name, deg in in_degree.items() if deg == 0)
    order: list[str] = []
    while ready:
        nxt: list[str] = []
        for name in ready:
            order.append(name)
            for child in node_map[name].children:
                if child in in_degree:
                    in_degree[child] -= 1
                    if in_degree[child] == 0:
                        nxt.append(child)
        ready = sorted(nxt)
    return order


def validate(w: Workflow) -> ValidationReport:
    """Structural validation: names, edges, symmetry, acyclicity, tools.

    Zero or multiple sinks are warnings, not errors.
    """
    report = ValidationReport()
    err = report.errors.append

    seen: set[str] = set()
    for n in w.nodes:
        if not n.name.strip():
            err(Violation("empty_name", (n.name,), "node with empty name"))
        elif n.name in seen:
            err(Violation("duplicate_name", (n.name,), f"duplicate node name {n.name!r}"))
        seen.add(n.name)

    node_map = w.node_map()
    for n in w.nodes:
        for tool in n.tools:
            if tool not in TOOL_VOCABULARY:
                err(Violation("unknown_tool", (n.name,), f"{n.name}: unknown tool {tool!r}"))
        for label, refs in (("children", n.children), ("parent", n.parent)):
            dupes = {r for r in refs if refs.count(r) > 1}
            for r in sorted(dupes):
                err(Violation("duplicate_edge", (n.name, r), f"{n.name}.{label} lists {r!r} twice"))
            for r in refs:
                if r not in node_map:
                    err(Violation("dangling_edge", (n.name, r), f"{n.name}.{label} references unknown node {r!r}"))
        if n.name in n.children or n.name in n.parent:
            err(Violation("cycle", (n.name,), f"{n.name} references itself"))

    for n in w.nodes:
        for c in n.children:
            if c in node_map and c != n.name and n.name not in node_map[c].parent:
                err(Violation("asymmetric_edge", (n.name, c), f"{n.name} -> {c} missing from {c}.parent"))
        for p in n.parent:
            if p in node_map and p != n.name and n.name not in node_map[p].children:
                err(Violation("asymmetric_edge", (p, n.name), f"{p} -> {n.name} missing from {p}.children"))

    if len(node_map) == len(w.nodes):
        order = _topo_names(node_map)
        if len(order) < len(node_map):
            trapped = tuple(sorted(set(node_map) - set(order)))
            err(Violation("cycle", trapped, f"cycle through {', '.join(trapped)}"))

    warn = report.warnings.append
    if not w.nodes:
        warn(Violation("empty_workflow", (), "workflow has no nodes"))
    else:
        sinks = tuple(sorted(w.sinks()))
        if not sinks:
            warn(Violation("no_sink", (), "no node without children"))
        elif len(sinks) > 1:
            warn(Violation("multiple_sinks", sinks, f"multiple sinks: {', '.join(sinks)}"))
    return report


# ---------------------------------------------------------------------------
# Edits.

@dataclass(frozen=True)
class WorkflowEdit:
    """One structural or content edit, applied transactionally."""

    kind: str
    payload: dict

    @staticmethod
    def add_node(node: dict) -> "WorkflowEdit":
        return WorkflowEdit("add_node", {"node": node})

    @staticmethod
    def delete_subtree(name: str) -> "WorkflowEdit":
        return WorkflowEdit("delete_subtree", {"name": name})

    @staticmethod
    def reconnect(
        remove: tuple[str, str] | None = None, add: tuple[str, str] | None = None
    ) -> "WorkflowEdit":
        return WorkflowEdit(
            "reconnect",
            {
                "remove": None if remove is None else {"parent": remove[0], "child": remove[1]},
                "add": None if add is None else {"parent": add[0], "child": add[1]},
            },
        )

    @staticmethod
    def set_prompt(name: str, prompt: str) -> "WorkflowEdit":
        return WorkflowEdit("set_prompt", {"name": name, "prompt": prompt})

    @staticmethod
    def set_tools(name: str, tools: list[str]) -> "WorkflowEdit":
        return WorkflowEdit("set_tools", {"name": name, "tools": list(tools)})


def edit_to_dict(edit: WorkflowEdit) -> dict:
    return {"kind": edit.kind, **edit.payload}


def edit_from_dict(obj: Any) -> WorkflowEdit:
    if not isinstance(obj, dict):
        raise MalformedEditError("edit: expected an object")
    kind = obj.get("kind")
    if kind not in EDIT_KINDS:
        raise MalformedEditError(f"edit: unknown kind {kind!r}")
    payload = {k: v for k, v in obj.items() if k != "kind"}
    edit = WorkflowEdit(kind, payload)
    _check_edit_shape(edit)
    return edit


def _edge_halves(payload: dict, key: str) -> tuple[str, str] | None:
    half = payload.get(key)
    if half is None:
        return None
    if (
        not isinstance(half, dict)
        or not isinstance(half.get("parent"), str)
        or not isinstance(half.get("child"), str)
        or set(half) != {"parent", "child"}
    ):
        raise MalformedEditError(f"reconnect.{key}: expected {{parent, child}}")
    return half["parent"], half["child"]


def _check_edit_shape(edit: WorkflowEdit) -> None:
    p = edit.payload
    if edit.kind == "add_node":
        if set(p) != {"node"}:
            raise MalformedEditError("add_node: expected a single 'node' payload")
        try:
            node_from_dict(p["node"])
        except SchemaError as exc:
            raise MalformedEditError(f"add_node: {exc}") from None
    elif edit.kind == "delete_subtree":
        if set(p) != {"name"} or not isinstance(p["name"], str):
            raise MalformedEditError("delete_subtree: expected {name}")
    elif edit.kind == "reconnect":
        if set(p) - {"remove", "add"}:
            raise MalformedEditError("reconnect: expected {remove?, add?}")
        remove = _edge_halves(p, "remove")
        add = _edge_halves(p, "add")
        if remove is None and add is None:
            raise MalformedEditError("reconnect: at least one of remove/add required")
    elif edit.kind == "set_prompt":
        if set(p) != {"name", "prompt"} or not isinstance(p["name"], str) or not isinstance(p["prompt"], str):
            raise MalformedEditError("set_prompt: expected {name, prompt}")
    elif edit.kind == "set_tools":
        if set(p) != {"name", "tools"} or not isinstance(p["name"], str):
            raise MalformedEditError("set_tools: expected {name, tools}")
        if not isinstance(p["tools"], list) or any(not isinstance(t, str) for t in p["tools"]):
            raise MalformedEditError("set_tools: tools must be a list of strings")


def subtree_names(w: Workflow, root: str) -> set[str]:
    """Names of root plus everything reachable through children edges."""
    node_map = w.node_map()
    if root not in node_map:
        raise UnknownNodeError(root)
    seen = {root}
    frontier = [root]
    while frontier:
        current = frontier.pop()
        for child in node_map[current].children:
            if child in node_map and child not in seen:
                seen.add(child)
                frontier.append(child)
    return seen


def apply_edit(w: Workflow, edit: WorkflowEdit) -> Workflow:
    """Apply one edit transactionally and return a new workflow.

    The input workflow is never mutated. Raises UnknownNodeError for
    references to absent nodes, MalformedEditError for unusable payloads,
    and RejectedEditError (with the validation report) when the result
    would be structurally invalid.
    """
    _check_edit_shape(edit)
    out = copy_workflow(w)
    node_map = out.node_map()

    def named(name: str) -> WorkflowNode:
        node = node_map.get(name)
        if node is None:
            raise UnknownNodeError(name)
        return node

    if edit.kind == "add_node":
        node = node_from_dict(edit.payload["node"])
        if node.name not in node_map:
            for p in node.parent:
                named(p).children.append(node.name)
            for c in node.children:
                named(c).parent.append(node.name)
        out.nodes.append(node)

    elif edit.kind == "delete_subtree":
        doomed = subtree_names(out, edit.payload["name"])
        out.nodes = [n for n in out.nodes if n.name not in doomed]
        for n in out.nodes:
            n.parent = [p for p in n.parent if p not in doomed]
            n.children = [c for c in n.children if c not in doomed]

    elif edit.kind == "reconnect":
        remove = _edge_halves(edit.payload, "remove")
        add = _edge_halves(edit.payload, "add")
        if remove is not None:
            parent, child = named(remove[0]), named(remove[1])
            if remove[1] not in parent.children:
                raise MalformedEditError(f"reconnect: edge {remove[0]} -> {remove[1]} not present")
            parent.children.remove(remove[1])
            if remove[0] in child.parent:
                child.parent.remove(remove[0])
        if add is not None:
            parent, child = named(add[0]), named(add[1])
            if add[1] in parent.children:
                raise MalformedEditError(f"reconnect: edge {add[0]} -> {add[1]} already present")
            parent.children.append(add[1])
            child.parent.append(add[0])

    elif edit.kind == "set_prompt":
        named(edit.payload["name"]).prompt = edit.payload["prompt"]

    elif edit.kind == "set_tools":
        named(edit.payload["name"]).tools = list(edit.payload["tools"])

    report = validate(out)
    if not report.ok:
        raise RejectedEditError(report)
    return out


# ---------------------------------------------------------------------------
# Diff.

def graph_signature(w: Workflow) -> tuple:
    """Structure and node content, ignoring node order and metadata."""
    return (
        frozenset(n.name for n in w.nodes),
        frozenset(w.edge_set()),
        tuple(sorted((n.name, n.prompt, tuple(n.tools)) for n in w.nodes)),
    )


def diff(old: Workflow, new: Workflow) -> list[WorkflowEdit]:
    """Edit script turning old into new, using the edit vocabulary only.

    Every emitted edit applies cleanly in sequence, and replaying the
    script over old yields a workflow graph-identical to new (node order
    and top-level metadata are outside the vocabulary and not diffed).
    Identical workflows yield an empty script.
    """
    old_map = old.node_map()
    new_map = new.node_map()
    old_edges = old.edge_set()
    new_edges = new.edge_set()
    surviving = old_map.keys() & new_map.keys()
    doomed = old_map.keys() - new_map.keys()
    added = new_map.keys() - old_map.keys()

    edits: list[WorkflowEdit] = []
    sim = old

    def emit(edit: WorkflowEdit) -> None:
        nonlocal sim
        sim = apply_edit(sim, edit)
        edits.append(edit)

    # Cut edges whose child survives: removed survivor edges, plus edges
    # from doomed nodes into survivors so later deletes cannot cascade
    # across the surviving set.
    for parent, child in sorted(old_edges - new_edges):
        if child in surviving:
            emit(WorkflowEdit.reconnect(remove=(parent, child)))

    # Delete doomed roots; cascades now stay inside the doomed set.
    for name in _topo_names(old_map):
        if name in doomed and name in sim.node_map():
            emit(WorkflowEdit.delete_subtree(name))

    # Add new nodes in topological order, wiring edges whose other
    # endpoint already exists.
    for name in _topo_names(new_map):
        if name not in added:
            continue
        spec_node = new_map[name]
        present = sim.node_map().keys()
        emit(
            WorkflowEdit.add_node(
                {
                    "name": name,
                    "parent": [p for p in spec_node.parent if p in present],
                    "children": [c for c in spec_node.children if c in present],
                    "tools": list(spec_node.tools),
                    "prompt": spec_node.prompt,
                }
            )
        )

    # Any remaining missing edges connect surviving nodes.
    for parent, child in sorted(new_edges - sim.edge_set()):
        emit(WorkflowEdit.reconnect(add=(parent, child)))

    # Content updates on surviving nodes.
    for name in sorted(surviving):
        if old_map[name].prompt != new_map[name].prompt:
            emit(WorkflowEdit.set_prompt(name, new_map[name].prompt))
        if old_map[name].tools != new_map[name].tools:
            emit(WorkflowEdit.set_tools(name, list(new_map[name].tools)))

    if graph_signature(sim) != graph_signature(new):
        raise RuntimeError("diff replay mismatch")
    return edits
