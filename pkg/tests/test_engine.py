"""Engine tests: leveling in time, failure containment, replay, terminals.

Timing assertions use generous bands; they prove overlap versus
sequencing, not absolute speed.
"""

from __future__ import annotations

import asyncio
import json
import time
from pathlib import Path

import pytest

from demoflow.backends import MockLlmBackend
from demoflow.capture import load_demo_log
from demoflow.execution import (
    DriverError,
    MockNodeAgent,
    Session,
    SimulatedDriver,
    execute,
    plan,
    run_node,
)
from demoflow.execution.engine import execution_result_to_dict, terminal_node
from demoflow.gateway import LlmGateway
from demoflow.generation import generate_workflow
from demoflow.model import ActionInfo, ContextInfo, Workflow, WorkflowNode

FIXTURES = Path(__file__).parent / "fixtures"

NO_PAGES: dict = {}


def make_workflow(edges: dict[str, list[str]], prompts: dict[str, str] | None = None) -> Workflow:
    prompts = prompts or {}
    parents: dict[str, list[str]] = {name: [] for name in edges}
    for name, kids in edges.items():
        for kid in kids:
            parents[kid].append(name)
    nodes = [
        WorkflowNode(
            name=n,
            parent=parents[n],
            children=kids,
            tools=[],
            prompt=prompts.get(n, f"Purpose: handle {n}."),
        )
        for n, kids in edges.items()
    ]
    return Workflow(
        timestamp="2025-09-21T01:38:36.942Z",
        context_info=ContextInfo(goal="engine test"),
        action_info=ActionInfo(confidence=0.5),
        nodes=nodes,
    )


DIAMOND = {"A": ["B", "C"], "B": ["D"], "C": ["D"], "D": []}
CHAIN = {"A": ["B"], "B": ["C"], "C": ["D"], "D": []}
# One root fanning into two chains and a direct edge, all joining at G.
CONTAINMENT = {
    "A": ["B", "C", "F"],
    "B": ["D"],
    "C": ["E"],
    "D": ["G"],
    "E": ["G"],
    "F": ["G"],
    "G": [],
}


def run_workflow(w: Workflow, **kwargs):
    session = kwargs.pop("session", Session("s"))
    driver = kwargs.pop("driver", SimulatedDriver(NO_PAGES))
    agent = kwargs.pop("agent", MockNodeAgent())
    return asyncio.run(
        execute(w, driver, session, agent=agent, execution_id="e1", **kwargs)
    ), session


class TestLevelTiming:
    def test_diamond_overlaps_same_level(self):
        start = time.monotonic()
        result, _ = run_workflow(make_workflow(DIAMOND), agent=MockNodeAgent(latency_s=0.05))
        elapsed = time.monotonic() - start
        # 3 levels of 0.05 s each; 4 sequential nodes would need 0.2 s.
        assert 0.14 <= elapsed < 0.19
        assert all(r.status == "succeeded" for r in result.results.values())

    def test_chain_runs_sequentially(self):
        start = time.monotonic()
        run_workflow(make_workflow(CHAIN), agent=MockNodeAgent(latency_s=0.05))
        elapsed = time.monotonic() - start
        assert elapsed >= 0.19

    def test_running_events_overlap_within_level(self):
        events = []
        run_workflow(
            make_workflow(DIAMOND),
            agent=MockNodeAgent(latency_s=0.02),
            observer=lambda ev: events.append(ev),
        )
        marks = [
            (ev.payload["node"], ev.payload["status"])
            for ev in events
            if ev.kind == "node_status"
        ]
        # Both B and C are announced running before either finishes.
        assert marks.index(("C", "running")) < marks.index(("B", "succeeded"))
        assert marks.index(("B", "running")) < marks.index(("C", "succeeded"))


class TestFailureContainment:
    def test_descendants_skipped_branches_run(self):
        result, session = run_workflow(
            make_workflow(CONTAINMENT), agent=MockNodeAgent(fail_nodes={"C"})
        )
        statuses = {name: r.status for name, r in result.results.items()}
        assert statuses == {
            "A": "succeeded",
            "B": "succeeded",
            "C": "failed",
            "D": "succeeded",
            "E": "skipped",
            "F": "succeeded",
            "G": "skipped",
        }
        assert "ancestor 'C' failed" in result.results["E"].output
        assert result.results["C"].output.startswith("error: injected failure")

    def test_skip_closure_matches_reachability(self):
        w = make_workflow(CONTAINMENT)
        byname = {n.name: n for n in w.nodes}
        reachable = set()
        frontier = list(byname["B"].children)
        while frontier:
            name = frontier.pop()
            if name not in reachable:
                reachable.add(name)
                frontier.extend(byname[name].children)
        result, _ = run_workflow(w, agent=MockNodeAgent(fail_nodes={"B"}))
        skipped = {name for name, r in result.results.items() if r.status == "skipped"}
        assert skipped == reachable

    def test_root_failure_skips_everything_downstream(self):
        result, _ = run_workflow(
            make_workflow(CHAIN), agent=MockNodeAgent(fail_nodes={"A"})
        )
        statuses = [result.results[n].status for n in "ABCD"]
        assert statuses == ["failed", "skipped", "skipped", "skipped"]

    def test_skipped_results_land_in_session(self):
        _, session = run_workflow(
            make_workflow(CHAIN), agent=MockNodeAgent(fail_nodes={"A"})
        )
        stored = session.results_map("e1")
        assert {n: r.status for n, r in stored.items()} == {
            "A": "failed",
            "B": "skipped",
            "C": "skipped",
            "D": "skipped",
        }


class TestReplay:
    def test_session_history_reconstructs_results(self):
        result, session = run_workflow(
            make_workflow(CONTAINMENT), agent=MockNodeAgent(fail_nodes={"C"})
        )
        assert session.results_map("e1") == result.results

    def test_rerunning_same_execution_id_is_rejected(self):
        w = make_workflow({"A": []})
        session = Session("s")
        run_workflow(w, session=session)
        with pytest.raises(ValueError, match="already recorded"):
            run_workflow(w, session=session)


class TestTerminalRule:
    def test_unique_sink_wins_silently(self):
        w = make_workflow(DIAMOND)
        name, warnings = terminal_node(w, plan(w))
        assert (name, warnings) == ("D", [])

    def test_deepest_sink_preferred(self):
        w = make_workflow({"A": ["B", "C"], "B": ["D"], "C": [], "D": []})
        name, warnings = terminal_node(w, plan(w))
        assert name == "D"
        assert "multiple sink nodes" in warnings[0]

    def test_lexicographic_tiebreak_at_same_depth(self):
        w = make_workflow({"A": ["C", "B"], "B": [], "C": []})
        name, _ = terminal_node(w, plan(w))
        assert name == "B"

    def test_final_output_and_warning_surface_in_result(self):
        result, _ = run_workflow(make_workflow({"A": ["B", "C"], "B": [], "C": []}))
        assert result.final_output == result.results["B"].output
        assert any("multiple sink nodes" in wtext for wtext in result.warnings)


class TestNodeLimits:
    def test_timeout_marks_node_failed(self):
        result, _ = run_workflow(
            make_workflow({"A": []}),
            agent=MockNodeAgent(latency_s=0.2),
            node_timeout_s=0.05,
        )
        assert result.results["A"].status == "failed"
        assert "timed out after 0.05s" in result.results["A"].output

    def test_budget_overrun_marks_node_failed(self):
        prompt = "Steps: " + " ".join(f"{i}) read the page;" for i in range(1, 6))
        w = make_workflow({"A": []}, prompts={"A": prompt})
        w.nodes[0].tools = ["browser.read"]
        result, _ = run_workflow(w, budget=3)
        assert result.results["A"].status == "failed"
        assert "action budget exceeded" in result.results["A"].output

    def test_driver_loss_aborts_and_keeps_partials(self):
        pages = {"a.test": {"text": "A page.", "targets": []}}
        w = make_workflow(
            {"A": ["B"], "B": []},
            prompts={"B": "Steps: 1) open a.test in a new tab;"},
        )
        w.nodes[1].tools = ["browser.open"]
        driver = SimulatedDriver(pages)

        class ClosingAgent(MockNodeAgent):
            async def run(self, node, history, gate):
                if node.name == "B":
                    driver.close()
                return await super().run(node, history, gate)

        session = Session("s")
        with pytest.raises(DriverError):
            run_workflow(w, driver=driver, agent=ClosingAgent(), session=session)
        assert [r.node_name for _, r in session.history("e1")] == ["A"]


class TestRunNode:
    def test_pulls_parent_outputs_from_session(self):
        w = make_workflow(
            {"Fetch": ["Summarize"], "Summarize": []},
            prompts={"Summarize": "Purpose: synthesize ancestor results."},
        )
        session = Session("s")
        driver = SimulatedDriver(NO_PAGES)

        async def scenario() -> str:
            fetch, summarize = w.nodes
            await run_node(fetch, session, driver, agent=MockNodeAgent(), execution_id="e1")
            result = await run_node(
                summarize, session, driver, agent=MockNodeAgent(), execution_id="e1"
            )
            return result.output

        output = asyncio.run(scenario())
        assert "## Fetch" in output
        assert "Fetch: completed 0 of 0 actions." in output

    def test_explicit_history_overrides_session(self):
        w = make_workflow({"Solo": []}, prompts={"Solo": "Purpose: summarize inputs."})
        session = Session("s")
        result = asyncio.run(
            run_node(
                w.nodes[0],
                session,
                SimulatedDriver(NO_PAGES),
                agent=MockNodeAgent(),
                execution_id="e1",
                history=[("Ghost", "from the caller")],
            )
        )
        assert result.status == "succeeded"


class TestEndToEnd:
    def test_kayak_demo_runs_on_simulated_site(self):
        log = load_demo_log(FIXTURES / "kayak_demo.jsonl")
        w = asyncio.run(generate_workflow(LlmGateway(MockLlmBackend()), log))
        driver = SimulatedDriver(
            json.loads((FIXTURES / "sim_kayak.json").read_text(encoding="utf-8"))
        )
        session = Session("kayak")
        result = asyncio.run(
            execute(w, driver, session, agent=MockNodeAgent(), execution_id="e1")
        )
        assert all(r.status == "succeeded" for r in result.results.values())
        # The sink's report reaches back to the booking page the click landed on.
        assert "New York" in result.final_output
        assert "San Francisco" in result.final_output
        assert "2025-09-01" in result.final_output
        assert result.warnings == []
        assert session.results_map("e1") == result.results

    def test_result_to_dict_shape(self):
        result, _ = run_workflow(make_workflow({"A": ["B"], "B": []}))
        d = execution_result_to_dict(result)
        assert d["execution_id"] == "e1"
        assert d["plan"] == {"levels": [["A"], ["B"]]}
        assert set(d["results"]) == {"A", "B"}
        assert d["final_output"] == result.final_output
        assert d["warnings"] == []
