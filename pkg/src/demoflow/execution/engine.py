"""The execution engine.

Levels run one after another; nodes inside a level run concurrently.
When a node fails, every descendant is marked skipped while independent
branches keep going. All results, including skips, land in the session
history, so replaying the history rebuilds the results map exactly.
"""

from __future__ import annotations

import asyncio
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable

from ..model import Workflow, WorkflowNode
from .agents import DEFAULT_ACTION_BUDGET, AgentError, NodeAgent, ToolGate
from .drivers import BrowserDriver
from .planner import ExecutionPlan, plan, plan_to_dict
from .session import NodeResult, Session, result_to_dict

DEFAULT_NODE_TIMEOUT_S = 120.0


@dataclass(frozen=True)
class ExecutionEvent:
    kind: str  # node_status | final_result
    payload: dict


@dataclass
class ExecutionResult:
    execution_id: str
    plan: ExecutionPlan
    results: dict[str, NodeResult]
    final_output: str
    warnings: list[str] = field(default_factory=list)


def execution_result_to_dict(r: ExecutionResult) -> dict:
    return {
        "execution_id": r.execution_id,
        "plan": plan_to_dict(r.plan),
        "results": {name: result_to_dict(res) for name, res in sorted(r.results.items())},
        "final_output": r.final_output,
        "warnings": list(r.warnings),
    }


def _now_iso() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%f")[:-3] + "Z"


def _descendants(node_map: dict[str, WorkflowNode], root: str) -> set[str]:
    out: set[str] = set()
    frontier = list(node_map[root].children)
    while frontier:
        name = frontier.pop()
        if name in out:
            continue
        out.add(name)
        frontier.extend(node_map[name].children)
    return out


def _ancestors(node_map: dict[str, WorkflowNode], name: str) -> set[str]:
    out: set[str] = set()
    frontier = list(node_map[name].parent)
    while frontier:
        current = frontier.pop()
        if current in out:
            continue
        out.add(current)
        frontier.extend(node_map[current].parent)
    return out


def terminal_node(w: Workflow, p: ExecutionPlan) -> tuple[str, list[str]]:
    """The node whose output becomes the final output, plus any warnings.

    A single sink is authoritative; among several sinks the deepest level
    wins with lexicographic tie-break, and the ambiguity is flagged.
    """
    sinks = sorted(n.name for n in w.nodes if not n.children)
    if len(sinks) == 1:
        return sinks[0], []
    chosen = min(sinks, key=lambda name: (-p.level_of(name), name))
    warning = (
        f"multiple sink nodes ({', '.join(sinks)}); final output taken from {chosen!r}"
    )
    return chosen, [warning]


async def run_node(
    node: WorkflowNode,
    session: Session,
    driver: BrowserDriver,
    *,
    agent: NodeAgent,
    execution_id: str,
    history: list[tuple[str, str]] | None = None,
    budget: int = DEFAULT_ACTION_BUDGET,
    timeout_s: float = DEFAULT_NODE_TIMEOUT_S,
) -> NodeResult:
    """Run one node agent behind a fresh ToolGate and record the result.

    Without an explicit history the parents' outputs are pulled from the
    session. DriverError is allowed to propagate: it ends the execution.
    """
    if history is None:
        available = session.results_map(execution_id)
        history = [
            (p, available[p].output) for p in node.parent if p in available
        ]
    gate = ToolGate(driver, node.tools, budget=budget)
    started = _now_iso()
    try:
        output = await asyncio.wait_for(
            agent.run(node, history, gate), timeout=timeout_s
        )
        status = "succeeded"
    except AgentError as exc:
        status, output = "failed", f"error: {exc}"
    except asyncio.TimeoutError:
        status, output = "failed", f"error: node timed out after {timeout_s:g}s"
    result = NodeResult(
        node_name=node.name,
        status=status,
        output=output,
        started=started,
        finished=_now_iso(),
        actions_taken=tuple(gate.records),
    )
    session.append(execution_id, result)
    return result


async def execute(
    workflow: Workflow,
    driver: BrowserDriver,
    session: Session,
    *,
    agent: NodeAgent,
    execution_id: str | None = None,
    budget: int = DEFAULT_ACTION_BUDGET,
    node_timeout_s: float = DEFAULT_NODE_TIMEOUT_S,
    observer: Callable[[ExecutionEvent], None] | None = None,
    workflow_version: str = "",
) -> ExecutionResult:
    """Run the whole workflow level by level against the driver."""
    p = plan(workflow, workflow_version)
    eid = execution_id or uuid.uuid4().hex
    node_map = {n.name: n for n in workflow.nodes}
    results: dict[str, NodeResult] = {}
    skipped: dict[str, str] = {}  # name → failed ancestor that caused the skip

    def emit(kind: str, payload: dict) -> None:
        if observer is not None:
            observer(ExecutionEvent(kind, payload))

    def mark_failure(name: str) -> None:
        for descendant in _descendants(node_map, name):
            skipped.setdefault(descendant, name)

    for level in p.levels:
        to_skip = [name for name in level if name in skipped]
        to_run = [name for name in level if name not in skipped]

        for name in to_skip:
            stamp = _now_iso()
            result = NodeResult(
                node_name=name,
                status="skipped",
                output=f"skipped: ancestor {skipped[name]!r} failed",
                started=stamp,
                finished=stamp,
            )
            session.append(eid, result)
            results[name] = result
            emit("node_status", {"execution_id": eid, "node": name, "status": "skipped"})

        async def _run(name: str) -> NodeResult:
            node = node_map[name]
            history = [
                (a, results[a].output)
                for a in sorted(_ancestors(node_map, name), key=lambda n: (p.level_of(n), n))
                if a in results and results[a].status == "succeeded"
            ]
            return await run_node(
                node,
                session,
                driver,
                agent=agent,
                execution_id=eid,
                history=history,
                budget=budget,
                timeout_s=node_timeout_s,
            )

        for name in to_run:
            emit("node_status", {"execution_id": eid, "node": name, "status": "running"})
        level_results = await asyncio.gather(*(_run(name) for name in to_run))
        for result in level_results:
            results[result.node_name] = result
            emit(
                "node_status",
                {"execution_id": eid, "node": result.node_name, "status": result.status},
            )
            if result.status == "failed":
                mark_failure(result.node_name)

    terminal, warnings = terminal_node(workflow, p)
    final_output = results[terminal].output
    emit(
        "final_result",
        {"execution_id": eid, "output": final_output, "warnings": list(warnings)},
    )
    return ExecutionResult(
        execution_id=eid,
        plan=p,
        results=results,
        final_output=final_output,
        warnings=warnings,
    )
