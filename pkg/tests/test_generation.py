"""Generation pipeline tests: parallel analysis, synthesis, fallback,
and incremental regeneration diffs."""

from __future__ import annotations

import asyncio
import json
import time
from pathlib import Path

import pytest

from demoflow.backends import MockLlmBackend
from demoflow.capture import DemoLog, EmptyLogError, load_demo_log
from demoflow.gateway import LlmGateway
from demoflow.generation import (
    GenerationError,
    coerce_action_info,
    coerce_context_info,
    coerce_node,
    empty_workflow,
    fallback_workflow,
    generate_workflow,
    regenerate,
)
from demoflow.model import ActionInfo, ContextInfo, apply_edit, canonical_json, graph_signature, validate

from helpers import RoutedBackend, oracle_check_graph
from test_backends import KAYAK_CONTEXT

FIXTURES = Path(__file__).parent / "fixtures"

ACTION_REPLY = json.dumps(
    {
        "actions": ["open kayak.com", "search flights"],
        "sites": ["kayak.com"],
        "phases": ["search"],
        "confidence": 0.9,
    }
)

CYCLIC_NODES_REPLY = json.dumps(
    {
        "nodes": [
            {"name": "A", "parent": ["B"], "children": ["B"], "tools": [], "prompt": "Purpose: a."},
            {"name": "B", "parent": ["A"], "children": ["A"], "tools": [], "prompt": "Purpose: b."},
        ]
    }
)


def kayak_log() -> DemoLog:
    return load_demo_log(FIXTURES / "kayak_demo.jsonl")


def mock_gateway() -> LlmGateway:
    return LlmGateway(MockLlmBackend())


class TestCoercion:
    def test_context_tolerates_bad_shapes(self):
        ctx = coerce_context_info({"goal": 7, "interests": "price", "values": [1, "x"]})
        assert ctx.goal == "7"
        assert ctx.interests == []
        assert ctx.values == ["1", "x"]
        assert ctx.entities == []

    def test_action_confidence_clamped(self):
        assert coerce_action_info({"confidence": 7}).confidence == 1.0
        assert coerce_action_info({"confidence": -1}).confidence == 0.0
        assert coerce_action_info({"confidence": True}).confidence == 0.0
        assert coerce_action_info({"confidence": "high"}).confidence == 0.0

    def test_node_drops_extras_and_defaults(self):
        node = coerce_node({"name": "N", "notes": "extra", "children": ["M"]})
        assert node.name == "N"
        assert node.children == ["M"]
        assert node.parent == [] and node.tools == [] and node.prompt == ""

    def test_node_without_name_rejected(self):
        with pytest.raises(ValueError):
            coerce_node({"prompt": "Purpose: x."})
        with pytest.raises(ValueError):
            coerce_node({"name": "   "})


class TestGenerateWorkflow:
    def test_kayak_end_to_end(self):
        w = asyncio.run(generate_workflow(mock_gateway(), kayak_log()))
        assert validate(w).ok
        oracle_check_graph(w)
        assert {n.name for n in w.nodes} == {"SearchFlights", "SelectFlight", "SummarizeResults"}

    def test_timestamp_is_last_event(self):
        log = kayak_log()
        w = asyncio.run(generate_workflow(mock_gateway(), log))
        assert w.timestamp == log.events[-1].timestamp == "2025-09-21T01:38:36.942Z"

    def test_context_matches_frozen_analysis(self):
        from demoflow.model import context_info_to_dict

        w = asyncio.run(generate_workflow(mock_gateway(), kayak_log()))
        assert context_info_to_dict(w.context_info) == KAYAK_CONTEXT

    def test_byte_stable_across_runs(self):
        first = asyncio.run(generate_workflow(mock_gateway(), kayak_log()))
        second = asyncio.run(generate_workflow(mock_gateway(), kayak_log()))
        assert canonical_json(first) == canonical_json(second)

    def test_analysis_calls_run_concurrently(self):
        class Delayed:
            def __init__(self, inner, delay_s):
                self.inner = inner
                self.delay_s = delay_s

            async def complete(self, request):
                if request.system_prompt.startswith(("You are a context", "You are an action")):
                    await asyncio.sleep(self.delay_s)
                return await self.inner.complete(request)

        gateway = LlmGateway(Delayed(MockLlmBackend(), 0.2))
        start = time.monotonic()
        asyncio.run(generate_workflow(gateway, kayak_log()))
        elapsed = time.monotonic() - start
        # Sequential analysis would take at least 0.4s.
        assert elapsed < 0.35, f"analysis did not run in parallel: {elapsed:.3f}s"

    def test_empty_log_rejected(self):
        with pytest.raises(EmptyLogError):
            asyncio.run(generate_workflow(mock_gateway(), DemoLog(session_id="empty")))

    def test_empty_log_text_rejected(self):
        from demoflow.generation import analyze_actions, analyze_context

        for call in (analyze_context, analyze_actions):
            with pytest.raises(GenerationError):
                asyncio.run(call(mock_gateway(), "   "))

    def test_parsimony_bound(self):
        w = asyncio.run(generate_workflow(mock_gateway(), kayak_log()))
        assert len(w.nodes) <= len(w.action_info.phases) + 1

    def test_out_of_log_value_logged(self, caplog):
        reply = json.dumps({**KAYAK_CONTEXT, "values": ["Atlantis"]})
        gateway = LlmGateway(RoutedBackend({"You are a context": reply}))
        from demoflow.generation import analyze_context

        with caplog.at_level("WARNING", logger="demoflow.generation"):
            asyncio.run(analyze_context(gateway, "some log text"))
        assert any("Atlantis" in record.getMessage() for record in caplog.records)


class TestFallback:
    def routed(self, synthesis_reply: str) -> LlmGateway:
        return LlmGateway(
            RoutedBackend(
                {
                    "You are a context": json.dumps(KAYAK_CONTEXT),
                    "You are an action": ACTION_REPLY,
                    "You are a synthesis": synthesis_reply,
                }
            )
        )

    def test_cyclic_synthesis_falls_back(self):
        w = asyncio.run(generate_workflow(self.routed(CYCLIC_NODES_REPLY), kayak_log()))
        assert [n.name for n in w.nodes] == ["PerformTask", "SummarizeResults"]
        assert validate(w).ok
        oracle_check_graph(w)

    def test_empty_nodes_fall_back(self):
        w = asyncio.run(generate_workflow(self.routed(json.dumps({"nodes": []})), kayak_log()))
        assert [n.name for n in w.nodes] == ["PerformTask", "SummarizeResults"]

    def test_fallback_prompt_carries_actions(self):
        w = fallback_workflow(
            "2025-09-21T01:38:36.942Z",
            ContextInfo(goal="Book a flight", values=["New York"]),
            ActionInfo(actions=["open kayak.com", "search flights"]),
        )
        prompt = w.nodes[0].prompt
        assert "1) open kayak.com;" in prompt
        assert "2) search flights;" in prompt
        assert "'New York'" in prompt
        assert validate(w).ok

    def test_unusable_node_raises(self):
        gateway = self.routed(json.dumps({"nodes": [{"prompt": "Purpose: nameless."}]}))
        with pytest.raises(GenerationError) as err:
            asyncio.run(generate_workflow(gateway, kayak_log()))
        assert err.value.stage == "synthesis"


class TestRegenerate:
    def test_first_diff_rebuilds_from_empty(self):
        w, edits = asyncio.run(regenerate(mock_gateway(), kayak_log(), None))
        assert edits, "initial diff must not be empty"
        assert all(e.kind == "add_node" for e in edits)
        replayed = empty_workflow()
        for edit in edits:
            replayed = apply_edit(replayed, edit)
        assert graph_signature(replayed) == graph_signature(w)

    def test_incremental_diff_replays_onto_previous(self):
        full = kayak_log()
        # Prefix stops before the results page: no selection phase yet.
        cut = next(
            i for i, ev in enumerate(full.events) if "Delta" in (ev.target.visible_text or "")
        ) - 1
        prefix = DemoLog(session_id=full.session_id, events=full.events[:cut])
        gateway = mock_gateway()
        before = asyncio.run(generate_workflow(gateway, prefix))
        after, edits = asyncio.run(regenerate(gateway, full, before))

        assert "SelectFlight" not in {n.name for n in before.nodes}
        assert "SelectFlight" in {n.name for n in after.nodes}
        assert edits
        replayed = before
        for edit in edits:
            replayed = apply_edit(replayed, edit)
        assert graph_signature(replayed) == graph_signature(after)

    def test_no_change_means_no_edits(self):
        gateway = mock_gateway()
        w, _ = asyncio.run(regenerate(gateway, kayak_log(), None))
        again, edits = asyncio.run(regenerate(gateway, kayak_log(), w))
        assert edits == []
        assert canonical_json(again) == canonical_json(w)
