"""Kahn leveling of a workflow DAG.

A node's level is one past its deepest parent, roots sit at level 0.
Levels run sequentially during execution; members of one level may run
concurrently because they cannot depend on each other.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..model import Workflow, validate


class PlanningError(Exception):
    """The workflow cannot be leveled."""


@dataclass(frozen=True)
class ExecutionPlan:
    levels: tuple[tuple[str, ...], ...]
    workflow_version: str = ""

    def level_of(self, name: str) -> int:
        for index, level in enumerate(self.levels):
            if name in level:
                return index
        raise KeyError(name)

    @property
    def node_names(self) -> set[str]:
        return {name for level in self.levels for name in level}


def plan(w: Workflow, workflow_version: str = "") -> ExecutionPlan:
    """Level the workflow; names within a level are sorted for determinism."""
    report = validate(w)
    if not report.ok:
        raise PlanningError(f"workflow is not executable: {report.summary()}")
    if not w.nodes:
        raise PlanningError("workflow has no nodes")

    node_map = {n.name: n for n in w.nodes}
    level: dict[str, int] = {}
    pending = {name: len(node.parent) for name, node in node_map.items()}
    ready = sorted(name for name, count in pending.items() if count == 0)
    while ready:
        nxt: list[str] = []
        for name in ready:
            parents = node_map[name].parent
            level[name] = 1 + max(level[p] for p in parents) if parents else 0
            for child in node_map[name].children:
                pending[child] -= 1
                if pending[child] == 0:
                    nxt.append(child)
        ready = sorted(nxt)

    if len(level) != len(node_map):
        # validate() rejects cycles, so this is a defensive invariant check.
        raise PlanningError("leveling did not cover every node")

    depth = max(level.values()) + 1
    grouped: list[list[str]] = [[] for _ in range(depth)]
    for name, idx in level.items():
        grouped[idx].append(name)
    return ExecutionPlan(
        levels=tuple(tuple(sorted(group)) for group in grouped),
        workflow_version=workflow_version,
    )


def plan_to_dict(p: ExecutionPlan) -> dict:
    d: dict = {"levels": [list(level) for level in p.levels]}
    if p.workflow_version:
        d["workflow_version"] = p.workflow_version
    return d
