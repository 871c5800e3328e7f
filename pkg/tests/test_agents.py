"""Node agent tests: the tool gate, the step-grammar mock, the LLM loop."""

from __future__ import annotations

import asyncio
import json
import time

import pytest

from demoflow.execution import (
    ActionBudgetExceeded,
    AgentError,
    LlmNodeAgent,
    MockNodeAgent,
    SimulatedDriver,
    ToolGate,
    ToolPermissionError,
)
from demoflow.execution.agents import parse_steps
from demoflow.gateway import LlmGateway
from demoflow.model import WorkflowNode

from helpers import RoutedBackend

PAGES = {
    "news.example.com": {
        "text": "Front page. Top story: local fair draws record crowd.",
        "targets": [
            {"descriptor": "search", "kind": "fill"},
            {"descriptor": "date", "kind": "fill"},
            {"descriptor": "Top story", "kind": "click", "effect_url": "news.example.com/story"},
        ],
    },
    "news.example.com/story": {
        "text": "Local fair draws record crowd. Organizers report 12,000 visitors.",
        "targets": [],
    },
}


def gate(allowed: list[str], budget: int = 20) -> ToolGate:
    return ToolGate(SimulatedDriver(PAGES), allowed, budget=budget)


def node(prompt: str, tools: list[str], name: str = "Step", parent: list[str] | None = None) -> WorkflowNode:
    return WorkflowNode(name=name, parent=parent or [], children=[], tools=tools, prompt=prompt)


def run(coro):
    return asyncio.run(coro)


class TestToolGate:
    def test_dispatches_by_tool_name(self):
        g = gate(["browser.open", "browser.fill", "browser.click", "browser.read", "api.fetch"])
        assert run(g.invoke("browser.open", "news.example.com")).ok
        assert run(g.invoke("browser.fill", "search", "fair")).ok
        assert run(g.invoke("browser.click", "Top story")).ok
        assert run(g.invoke("browser.read")).ok
        assert run(g.invoke("api.fetch", "news.example.com")).ok
        assert [r.tool for r in g.records] == [
            "browser.open",
            "browser.fill",
            "browser.click",
            "browser.read",
            "api.fetch",
        ]

    def test_rejects_tool_outside_vocabulary(self):
        with pytest.raises(ToolPermissionError, match="permission violation"):
            run(gate(["browser.open"]).invoke("shell.exec", "rm -rf /"))

    def test_rejects_tool_not_granted_to_node(self):
        g = gate(["browser.open"])
        with pytest.raises(ToolPermissionError, match="browser.click"):
            run(g.invoke("browser.click", "Top story"))

    def test_budget_exhaustion(self):
        g = gate(["browser.read"], budget=3)
        for _ in range(3):
            run(g.invoke("browser.read"))
        with pytest.raises(ActionBudgetExceeded, match="3 driver actions"):
            run(g.invoke("browser.read"))

    def test_failed_actions_still_count_against_budget(self):
        g = gate(["browser.click"], budget=2)
        run(g.invoke("browser.click", "Nothing"))  # no page open, ok=False
        run(g.invoke("browser.click", "Nothing"))
        assert [r.ok for r in g.records] == [False, False]
        with pytest.raises(ActionBudgetExceeded):
            run(g.invoke("browser.click", "Nothing"))


class TestParseSteps:
    def test_extracts_numbered_steps(self):
        prompt = (
            "Purpose: search. Steps: 1) open news.example.com in a new tab;"
            " 2) enter 'fair' into 'search' field; 3) click 'Go'; Contingency: retry once."
        )
        assert parse_steps(prompt) == [
            "open news.example.com in a new tab",
            "enter 'fair' into 'search' field",
            "click 'Go'",
        ]

    def test_no_steps_section(self):
        assert parse_steps("Purpose: just a purpose line.") == []

    def test_contingency_text_excluded(self):
        steps = parse_steps("Steps: 1) click 'Go'; Contingency: if 1) fails, 2) reload.")
        assert steps == ["click 'Go'"]


class TestMockNodeAgent:
    def test_executes_step_grammar(self):
        prompt = (
            "Purpose: find the story. Steps: 1) open news.example.com in a new tab;"
            " 2) enter 'fair' into 'search' field; 3) set date to '2025-09-01';"
            " 4) click 'Top story'; Contingency: none."
        )
        g = gate(["browser.open", "browser.fill", "browser.click"])
        output = run(MockNodeAgent().run(node(prompt, g.allowed), [], g))
        assert output == "Step: completed 4 of 4 actions."
        assert [r.tool for r in g.records] == [
            "browser.open",
            "browser.fill",
            "browser.fill",
            "browser.click",
        ]

    def test_select_step_maps_to_click(self):
        prompt = "Steps: 1) open news.example.com in a new tab; 2) select the text 'Top story';"
        g = gate(["browser.open", "browser.click"])
        run(MockNodeAgent().run(node(prompt, g.allowed), [], g))
        assert g.records[-1].tool == "browser.click"
        assert g.records[-1].ok

    def test_explicit_read_step_is_not_doubled(self):
        prompt = "Steps: 1) open news.example.com in a new tab; 2) read the page;"
        g = gate(["browser.open", "browser.read"])
        output = run(MockNodeAgent().run(node(prompt, g.allowed), [], g))
        assert sum(1 for r in g.records if r.tool == "browser.read") == 1
        assert "Observed page: Front page." in output

    def test_auto_read_when_permitted_and_no_read_step(self):
        prompt = "Steps: 1) open news.example.com in a new tab; 2) click 'Top story';"
        g = gate(["browser.open", "browser.click", "browser.read"])
        output = run(MockNodeAgent().run(node(prompt, g.allowed), [], g))
        assert "Organizers report 12,000 visitors." in output

    def test_no_read_permission_no_observation(self):
        prompt = "Steps: 1) open news.example.com in a new tab;"
        g = gate(["browser.open"])
        output = run(MockNodeAgent().run(node(prompt, g.allowed), [], g))
        assert "Observed page" not in output

    def test_unparseable_steps_are_skipped(self):
        prompt = "Steps: 1) ponder quietly; 2) open news.example.com in a new tab;"
        g = gate(["browser.open"])
        output = run(MockNodeAgent().run(node(prompt, g.allowed), [], g))
        assert output == "Step: completed 1 of 1 actions."

    def test_all_steps_failing_raises(self):
        prompt = "Steps: 1) click 'Missing'; 2) click 'Also missing';"
        g = gate(["browser.click"])
        with pytest.raises(AgentError, match="every step failed"):
            run(MockNodeAgent().run(node(prompt, g.allowed), [], g))

    def test_injected_failure(self):
        g = gate(["browser.open"])
        agent = MockNodeAgent(fail_nodes={"Step"})
        with pytest.raises(AgentError, match="injected failure"):
            run(agent.run(node("Steps: 1) open news.example.com in a new tab;", g.allowed), [], g))

    def test_latency_is_simulated(self):
        g = gate([])
        agent = MockNodeAgent(latency_s=0.05)

        async def timed() -> float:
            start = time.monotonic()
            await agent.run(node("Purpose: wait.", []), [], g)
            return time.monotonic() - start

        assert run(timed()) >= 0.05

    def test_sink_concatenates_parent_outputs(self):
        sink = node(
            "Purpose: synthesize the results of previous nodes into a final summary.",
            [],
            name="Summarize",
            parent=["Fetch", "Check"],
        )
        history = [("Fetch", "fetched text"), ("Check", "all good")]
        output = run(MockNodeAgent().run(sink, history, gate([])))
        assert output == "# Summarize\n\n## Fetch\nfetched text\n\n## Check\nall good"

    def test_sink_notes_missing_parent(self):
        sink = node("Purpose: summarize everything.", [], name="S", parent=["Gone"])
        output = run(MockNodeAgent().run(sink, [], gate([])))
        assert "(missing input)" in output


class TestLlmNodeAgent:
    AGENT_PREFIX = "You are a web sub-task agent."

    def agent(self, replies: list[str]) -> LlmNodeAgent:
        backend = RoutedBackend({self.AGENT_PREFIX: replies})
        return LlmNodeAgent(LlmGateway(backend))

    def test_acts_then_finishes(self):
        agent = self.agent(
            [
                json.dumps({"action": "browser.open", "args": ["news.example.com"]}),
                json.dumps({"action": "browser.read", "args": []}),
                json.dumps({"action": "finish", "args": [], "output": "done: front page seen"}),
            ]
        )
        g = gate(["browser.open", "browser.read"])
        output = run(agent.run(node("Purpose: look around.", g.allowed), [], g))
        assert output == "done: front page seen"
        assert [r.tool for r in g.records] == ["browser.open", "browser.read"]

    def test_permission_violation_propagates(self):
        agent = self.agent([json.dumps({"action": "browser.click", "args": ["x"]})])
        with pytest.raises(ToolPermissionError):
            run(agent.run(node("Purpose: misbehave.", ["browser.open"]), [], gate(["browser.open"])))

    def test_unusable_reply_raises(self):
        agent = self.agent(["not json at all"])
        with pytest.raises(AgentError, match="unusable"):
            run(agent.run(node("Purpose: gibberish.", []), [], gate([])))

    def test_never_finishing_exhausts_budget(self):
        agent = self.agent([json.dumps({"action": "browser.read", "args": []})])
        g = gate(["browser.read"], budget=4)
        with pytest.raises(ActionBudgetExceeded):
            run(agent.run(node("Purpose: loop.", g.allowed), [], g))
