"""Workflow generation pipeline.

Context analysis and action analysis run concurrently over the rendered
demonstration log; the synthesizer turns both into a node graph. The
workflow timestamp is the timestamp of the last demonstration event, so
identical logs always produce byte-identical workflow documents.
"""

from __future__ import annotations

import asyncio
import json
import logging
from typing import Any

from .capture import DemoLog, render_log
from .gateway import CONTRACTS, LlmGateway, build_request
from .model import (
    ActionInfo,
    ContextInfo,
    Workflow,
    WorkflowEdit,
    WorkflowNode,
    action_info_to_dict,
    context_info_to_dict,
    diff,
    validate,
)

FALLBACK_TOOLS = ["browser.open", "browser.click", "browser.fill", "browser.read"]

logger = logging.getLogger(__name__)


class GenerationError(Exception):
    """The pipeline could not produce a workflow."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


def _str_list(value: Any) -> list[str]:
    if not isinstance(value, list):
        return []
    return [str(item) for item in value]


def coerce_context_info(obj: dict) -> ContextInfo:
    """Tolerant mapping from an LLM reply; required keys are already
    guaranteed by the gateway contract."""
    return ContextInfo(
        goal=str(obj.get("goal", "")),
        interests=_str_list(obj.get("interests")),
        constraints=_str_list(obj.get("constraints")),
        values=_str_list(obj.get("values")),
        entities=_str_list(obj.get("entities")),
    )


def coerce_action_info(obj: dict) -> ActionInfo:
    confidence = obj.get("confidence", 0.0)
    if isinstance(confidence, bool) or not isinstance(confidence, (int, float)):
        confidence = 0.0
    return ActionInfo(
        actions=_str_list(obj.get("actions")),
        sites=_str_list(obj.get("sites")),
        phases=_str_list(obj.get("phases")),
        confidence=max(0.0, min(1.0, float(confidence))),
    )


def coerce_node(obj: Any) -> WorkflowNode:
    """Tolerant node mapping: extra keys from the model are dropped."""
    if not isinstance(obj, dict) or not str(obj.get("name", "")).strip():
        raise ValueError(f"node without a usable name: {obj!r}")
    return WorkflowNode(
        name=str(obj["name"]),
        parent=_str_list(obj.get("parent")),
        children=_str_list(obj.get("children")),
        tools=_str_list(obj.get("tools")),
        prompt=str(obj.get("prompt", "")),
    )


async def analyze_context(gateway: LlmGateway, log_text: str, model_id: str = "default") -> ContextInfo:
    if not log_text.strip():
        raise GenerationError("context", "log text is empty")
    request = build_request("context", {"log_text": log_text}, model_id=model_id)
    context = coerce_context_info(
        await gateway.complete_validated(request, CONTRACTS["context_info"])
    )
    # Literal preservation cannot be enforced on an arbitrary backend, only flagged.
    for value in context.values:
        if value not in log_text:
            logger.warning("context value %r does not appear in the demonstration log", value)
    return context


async def analyze_actions(gateway: LlmGateway, log_text: str, model_id: str = "default") -> ActionInfo:
    if not log_text.strip():
        raise GenerationError("action", "log text is empty")
    request = build_request("action", {"log_text": log_text}, model_id=model_id)
    return coerce_action_info(await gateway.complete_validated(request, CONTRACTS["action_info"]))


async def synthesize(
    gateway: LlmGateway,
    context: ContextInfo,
    action: ActionInfo,
    model_id: str = "default",
) -> list[WorkflowNode]:
    context_json = json.dumps(context_info_to_dict(context), ensure_ascii=False)
    action_json = json.dumps(action_info_to_dict(action), ensure_ascii=False)
    request = build_request(
        "synthesis",
        {"context_info": context_json, "action_info": action_json},
        model_id=model_id,
    )
    reply = await gateway.complete_validated(request, CONTRACTS["workflow"])
    nodes_obj = reply.get("nodes")
    if not isinstance(nodes_obj, list):
        raise GenerationError("synthesis", "reply field 'nodes' is not a list")
    try:
        return [coerce_node(n) for n in nodes_obj]
    except ValueError as exc:
        raise GenerationError("synthesis", str(exc)) from exc


def fallback_workflow(timestamp: str, context: ContextInfo, action: ActionInfo) -> Workflow:
    """Degenerate two-node workflow used when synthesis output is not a
    valid graph: one node performs the whole demonstration, one summarizes."""
    steps = " ".join(f"{i}) {a};" for i, a in enumerate(action.actions, start=1))
    steps = steps or "1) follow the demonstrated procedure;"
    inputs = ",".join(f"'{v}'" for v in context.values) or "UI-provided"
    perform = WorkflowNode(
        name="PerformTask",
        parent=[],
        children=["SummarizeResults"],
        tools=list(FALLBACK_TOOLS),
        prompt=(
            f"Purpose: {context.goal or 'complete the demonstrated task'}. "
            f"Inputs: {inputs}. "
            "Outputs: the outcome of the demonstrated task. "
            "Preconditions: a browser session is available; "
            f"Steps: {steps} "
            "Contingency: if an element is missing, read the page and retry once."
        ),
    )
    sink = WorkflowNode(
        name="SummarizeResults",
        parent=["PerformTask"],
        children=[],
        tools=[],
        prompt=(
            "Purpose: synthesize the results of previous nodes into a final summary. "
            "Inputs: Outputs of parent nodes. "
            "Outputs: a concise structured summary of the workflow results. "
            "Preconditions: all parent nodes completed; "
            "Steps: 1) collect the outputs of all parent nodes; 2) merge them into one report; "
            "Contingency: if a parent output is missing, summarize the available results and note the gap."
        ),
    )
    return Workflow(timestamp, context, action, [perform, sink])


async def generate_workflow(
    gateway: LlmGateway, log: DemoLog, model_id: str = "default"
) -> Workflow:
    """Full pipeline: analyze (concurrently), synthesize, validate."""
    log_text = render_log(log)
    context, action = await asyncio.gather(
        analyze_context(gateway, log_text, model_id),
        analyze_actions(gateway, log_text, model_id),
    )
    nodes = await synthesize(gateway, context, action, model_id)
    timestamp = log.events[-1].timestamp
    workflow = Workflow(timestamp, context, action, nodes)
    if not nodes or not validate(workflow).ok:
        workflow = fallback_workflow(timestamp, context, action)
    return workflow


def empty_workflow() -> Workflow:
    return Workflow("", ContextInfo(), ActionInfo(), [])


async def regenerate(
    gateway: LlmGateway,
    log: DemoLog,
    previous: Workflow | None,
    model_id: str = "default",
) -> tuple[Workflow, list[WorkflowEdit]]:
    """Regenerate from the grown log and diff against the previous version.

    With no previous version the diff starts from an empty graph, so the
    edit stream alone can rebuild the workflow node by node.
    """
    workflow = await generate_workflow(gateway, log, model_id)
    baseline = previous if previous is not None else empty_workflow()
    return workflow, diff(baseline, workflow)
