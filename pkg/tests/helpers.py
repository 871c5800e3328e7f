"""Shared test utilities: independent graph oracles and random generators.

The oracle functions deliberately avoid the library's own validate()
so structural guarantees are checked through a second implementation.
"""

from __future__ import annotations

import random

from demoflow.model import (
    TOOL_VOCABULARY,
    ActionInfo,
    ContextInfo,
    Workflow,
    WorkflowEdit,
    WorkflowNode,
)


def oracle_check_graph(w: Workflow) -> None:
    """Assert symmetry, acyclicity, reachability, and name/tool sanity."""
    names = [n.name for n in w.nodes]
    assert len(set(names)) == len(names), "duplicate node names"
    byname = {n.name: n for n in w.nodes}

    for n in w.nodes:
        assert n.name.strip(), "empty node name"
        for tool in n.tools:
            assert tool in TOOL_VOCABULARY, f"unknown tool {tool}"
        assert len(set(n.children)) == len(n.children), f"{n.name}: duplicate child refs"
        assert len(set(n.parent)) == len(n.parent), f"{n.name}: duplicate parent refs"
        for c in n.children:
            assert c in byname, f"{n.name}: dangling child {c}"
            assert n.name in byname[c].parent, f"edge {n.name}->{c} not symmetric"
        for p in n.parent:
            assert p in byname, f"{n.name}: dangling parent {p}"
            assert n.name in byname[p].children, f"edge {p}->{n.name} not symmetric"

    # acyclicity: iterative DFS, grey means on the current path
    WHITE, GREY, BLACK = 0, 1, 2
    color = {name: WHITE for name in names}
    for start in names:
        if color[start] != WHITE:
            continue
        color[start] = GREY
        stack = [(start, iter(byname[start].children))]
        while stack:
            node, it = stack[-1]
            child = next(it, None)
            if child is None:
                color[node] = BLACK
                stack.pop()
                continue
            assert color[child] != GREY, f"cycle through {child}"
            if color[child] == WHITE:
                color[child] = GREY
                stack.append((child, iter(byname[child].children)))

    # reachability: walking children from the roots covers every node
    reached: set[str] = set()
    frontier = [n.name for n in w.nodes if not n.parent]
    while frontier:
        current = frontier.pop()
        if current in reached:
            continue
        reached.add(current)
        frontier.extend(byname[current].children)
    assert reached == set(names), f"unreachable nodes: {set(names) - reached}"


def random_dag(rng: random.Random, max_nodes: int = 12) -> Workflow:
    """Workflow over an index-ordered random DAG (edges only go forward)."""
    count = rng.randrange(1, max_nodes + 1)
    names = [f"N{i}" for i in range(count)]
    children: dict[str, list[str]] = {n: [] for n in names}
    parents: dict[str, list[str]] = {n: [] for n in names}
    for i in range(count):
        for j in range(i + 1, count):
            if rng.random() < 0.25:
                children[names[i]].append(names[j])
                parents[names[j]].append(names[i])
    nodes = [
        WorkflowNode(
            name=n,
            parent=parents[n],
            children=children[n],
            tools=rng.sample(TOOL_VOCABULARY, rng.randrange(0, 3)),
            prompt=f"Purpose: handle {n}.",
        )
        for n in names
    ]
    return Workflow(
        timestamp="2025-09-21T01:38:36.942Z",
        context_info=ContextInfo(goal="exercise the graph"),
        action_info=ActionInfo(confidence=0.5),
        nodes=nodes,
    )


def brute_force_levels(w: Workflow) -> list[list[str]]:
    """Reference leveling by plain recursion: level(n) = 1 + max(parents)."""
    byname = {n.name: n for n in w.nodes}
    memo: dict[str, int] = {}

    def level(name: str) -> int:
        if name not in memo:
            parents = byname[name].parent
            memo[name] = 1 + max(level(p) for p in parents) if parents else 0
        return memo[name]

    depth = {n.name: level(n.name) for n in w.nodes}
    out: list[list[str]] = [[] for _ in range(max(depth.values()) + 1)]
    for name, idx in depth.items():
        out[idx].append(name)
    return [sorted(group) for group in out]


def random_edit(rng: random.Random, w: Workflow, serial: int) -> WorkflowEdit:
    """One random edit against w; may be rejected when applied."""
    names = [n.name for n in w.nodes]
    kind = rng.choice(("add_node", "delete_subtree", "reconnect", "set_prompt", "set_tools"))
    if kind == "add_node" or not names:
        parent = rng.sample(names, min(len(names), rng.randrange(0, 3)))
        rest = [n for n in names if n not in parent]
        child = rng.sample(rest, min(len(rest), rng.randrange(0, 2)))
        return WorkflowEdit.add_node(
            {
                "name": f"A{serial}",
                "parent": parent,
                "children": child,
                "tools": rng.sample(TOOL_VOCABULARY, rng.randrange(0, 2)),
                "prompt": f"Purpose: added node {serial}.",
            }
        )
    if kind == "delete_subtree":
        return WorkflowEdit.delete_subtree(rng.choice(names))
    if kind == "reconnect":
        edges = sorted(w.edge_set())
        remove = rng.choice(edges) if edges and rng.random() < 0.5 else None
        add = None
        if remove is None or rng.random() < 0.5:
            add = (rng.choice(names), rng.choice(names))
        return WorkflowEdit.reconnect(remove=remove, add=add)
    if kind == "set_prompt":
        return WorkflowEdit.set_prompt(rng.choice(names), f"Purpose: rewritten {serial}.")
    return WorkflowEdit.set_tools(rng.choice(names), rng.sample(TOOL_VOCABULARY, rng.randrange(0, 4)))


class RoutedBackend:
    """Scripted backend dispatching on the system-prompt first line.

    Each route maps a prefix to a reply or a queue of replies; the last
    reply repeats once the queue drains. Requests are recorded per route.
    """

    def __init__(self, routes: dict[str, str | list[str]]):
        self.replies = {
            prefix: list(reply) if isinstance(reply, list) else [reply]
            for prefix, reply in routes.items()
        }
        self.requests: dict[str, list] = {prefix: [] for prefix in routes}

    async def complete(self, request) -> str:
        for prefix, queue in self.replies.items():
            if request.system_prompt.startswith(prefix):
                self.requests[prefix].append(request)
                return queue.pop(0) if len(queue) > 1 else queue[0]
        raise AssertionError(f"no route for system prompt {request.system_prompt!r}")
