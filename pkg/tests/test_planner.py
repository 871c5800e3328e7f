"""Planner tests: Kahn leveling against a brute-force recursion oracle."""

from __future__ import annotations

import random

import pytest

from demoflow.execution import PlanningError, plan, plan_to_dict
from demoflow.model import ActionInfo, ContextInfo, Workflow, WorkflowNode

from helpers import brute_force_levels, random_dag


def make_workflow(edges: dict[str, list[str]]) -> Workflow:
    parents: dict[str, list[str]] = {name: [] for name in edges}
    for name, kids in edges.items():
        for kid in kids:
            parents[kid].append(name)
    nodes = [
        WorkflowNode(name=n, parent=parents[n], children=kids, tools=[], prompt=f"Purpose: {n}.")
        for n, kids in edges.items()
    ]
    return Workflow(
        timestamp="2025-09-21T01:38:36.942Z",
        context_info=ContextInfo(goal="plan me"),
        action_info=ActionInfo(confidence=0.5),
        nodes=nodes,
    )


class TestPlan:
    def test_single_node(self):
        p = plan(make_workflow({"Only": []}))
        assert p.levels == (("Only",),)

    def test_chain(self):
        p = plan(make_workflow({"A": ["B"], "B": ["C"], "C": []}))
        assert p.levels == (("A",), ("B",), ("C",))

    def test_diamond(self):
        p = plan(make_workflow({"A": ["B", "C"], "B": ["D"], "C": ["D"], "D": []}))
        assert p.levels == (("A",), ("B", "C"), ("D",))

    def test_level_is_one_past_deepest_parent(self):
        # E has parents at levels 0 and 2, so it lands at 3, not 1.
        p = plan(make_workflow({"A": ["B", "E"], "B": ["C"], "C": ["E"], "E": []}))
        assert p.level_of("E") == 3

    def test_members_sorted_within_level(self):
        p = plan(make_workflow({"Root": ["Zeta", "Alpha", "Mid"], "Zeta": [], "Alpha": [], "Mid": []}))
        assert p.levels[1] == ("Alpha", "Mid", "Zeta")

    def test_independent_roots_share_level_zero(self):
        p = plan(make_workflow({"A": ["C"], "B": ["C"], "C": []}))
        assert p.levels[0] == ("A", "B")

    def test_node_names_property(self):
        p = plan(make_workflow({"A": ["B"], "B": []}))
        assert p.node_names == {"A", "B"}

    def test_level_of_unknown_name(self):
        p = plan(make_workflow({"A": []}))
        with pytest.raises(KeyError):
            p.level_of("Missing")

    def test_invalid_graph_rejected(self):
        w = make_workflow({"A": ["B"], "B": []})
        w.nodes[1].children.append("A")
        w.nodes[0].parent.append("B")
        with pytest.raises(PlanningError, match="not executable"):
            plan(w)

    def test_empty_workflow_rejected(self):
        w = make_workflow({"A": []})
        w.nodes.clear()
        with pytest.raises(PlanningError, match="no nodes"):
            plan(w)

    def test_oracle_agreement_on_random_dags(self):
        rng = random.Random(4242)
        for _ in range(300):
            w = random_dag(rng, max_nodes=10)
            got = [list(level) for level in plan(w).levels]
            assert got == brute_force_levels(w)

    def test_plan_is_deterministic(self):
        rng = random.Random(7)
        w = random_dag(rng, max_nodes=10)
        assert plan(w) == plan(w)


class TestPlanToDict:
    def test_levels_shape(self):
        p = plan(make_workflow({"A": ["B", "C"], "B": [], "C": []}))
        assert plan_to_dict(p) == {"levels": [["A"], ["B", "C"]]}

    def test_version_included_when_set(self):
        p = plan(make_workflow({"A": []}), workflow_version="v3")
        assert plan_to_dict(p) == {"levels": [["A"]], "workflow_version": "v3"}
