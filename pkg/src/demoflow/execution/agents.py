"""Node agents and the permission gate between them and the driver.

The mock agent interprets the numbered step grammar the synthesizer
emits, giving hermetic end-to-end executions; the LLM agent drives a
backend through a small JSON action protocol. Both reach the browser
only through a ToolGate, which enforces the node's declared tools and
the per-node action budget.
"""

from __future__ import annotations

import asyncio
import re
from typing import Protocol

from ..gateway import LlmGateway, LlmRequest, extract_json
from ..model import TOOL_VOCABULARY, WorkflowNode
from .drivers import BrowserDriver, DriverResult
from .session import ActionRecord

DEFAULT_ACTION_BUDGET = 20


class AgentError(Exception):
    """The node agent could not produce an output."""


class ToolPermissionError(AgentError):
    def __init__(self, tool: str, allowed: tuple[str, ...]):
        super().__init__(
            f"permission violation: tool {tool!r} is not in the node's tools {list(allowed)}"
        )
        self.tool = tool


class ActionBudgetExceeded(AgentError):
    def __init__(self, budget: int):
        super().__init__(f"action budget exceeded: {budget} driver actions used")
        self.budget = budget


class ToolGate:
    """Single checkpoint for all driver access on behalf of one node."""

    def __init__(
        self,
        driver: BrowserDriver,
        allowed_tools: list[str] | tuple[str, ...],
        budget: int = DEFAULT_ACTION_BUDGET,
    ):
        self.driver = driver
        self.allowed = tuple(allowed_tools)
        self.budget = budget
        self.records: list[ActionRecord] = []

    async def invoke(self, tool: str, *args: str) -> DriverResult:
        if tool not in TOOL_VOCABULARY:
            raise ToolPermissionError(tool, self.allowed)
        if tool not in self.allowed:
            raise ToolPermissionError(tool, self.allowed)
        if len(self.records) >= self.budget:
            raise ActionBudgetExceeded(self.budget)
        if tool == "browser.open":
            result = await self.driver.open_tab(args[0])
        elif tool == "browser.click":
            result = await self.driver.click(args[0])
        elif tool == "browser.fill":
            result = await self.driver.fill(args[0], args[1])
        elif tool == "browser.read":
            result = await self.driver.read_page()
        else:  # api.fetch
            result = await self.driver.fetch(args[0])
        self.records.append(ActionRecord(tool=tool, detail=result.detail, ok=result.ok))
        return result


class NodeAgent(Protocol):
    async def run(
        self,
        node: WorkflowNode,
        history: list[tuple[str, str]],
        gate: ToolGate,
    ) -> str: ...


# ---------------------------------------------------------------------------
# Deterministic mock agent.

_STEPS_RE = re.compile(r"Steps:(.*?)(?:Contingency:|$)", re.DOTALL)
_STEP_SPLIT_RE = re.compile(r"\d+\)\s*([^;]+);?")
_OPEN_RE = re.compile(r"^open (\S+) in a new tab$")
_ENTER_RE = re.compile(r"^enter '(.*)' into '(.*)' field$")
_SET_DATE_RE = re.compile(r"^set date to '(.*)'$")
_CLICK_RE = re.compile(r"^click '(.*)'$")
_SELECT_RE = re.compile(r"^select the text '(.*)'$")
_FETCH_RE = re.compile(r"^fetch (\S+)$")
_READ_RE = re.compile(r"^read the page$")

_SYNTH_PURPOSE_RE = re.compile(r"Purpose:[^.]*\b(synthesize|summariz)", re.IGNORECASE)


def parse_steps(prompt: str) -> list[str]:
    """Numbered steps from the prompt's Steps section, if any."""
    m = _STEPS_RE.search(prompt)
    if m is None:
        return []
    return [s.strip() for s in _STEP_SPLIT_RE.findall(m.group(1))]


class MockNodeAgent:
    """Executes the synthesizer's step grammar against the driver.

    latency_s simulates per-node model latency; fail_nodes injects
    failures by node name for containment tests.
    """

    def __init__(self, latency_s: float = 0.0, fail_nodes: frozenset[str] | set[str] = frozenset()):
        self.latency_s = latency_s
        self.fail_nodes = frozenset(fail_nodes)

    async def run(
        self,
        node: WorkflowNode,
        history: list[tuple[str, str]],
        gate: ToolGate,
    ) -> str:
        if self.latency_s:
            await asyncio.sleep(self.latency_s)
        if node.name in self.fail_nodes:
            raise AgentError(f"injected failure in {node.name}")

        if _SYNTH_PURPOSE_RE.search(node.prompt):
            return self._summarize(node, history)

        outcomes: list[tuple[str, DriverResult]] = []
        for step in parse_steps(node.prompt):
            invocation = self._step_invocation(step)
            if invocation is None:
                continue
            outcomes.append((invocation[0], await gate.invoke(*invocation)))

        observation = next(
            (r.detail for tool, r in reversed(outcomes) if tool == "browser.read" and r.ok), ""
        )
        if not observation and "browser.read" in gate.allowed:
            read = await gate.invoke("browser.read")
            if read.ok:
                observation = read.detail
        if outcomes and not any(r.ok for _, r in outcomes) and not observation:
            raise AgentError(
                f"every step failed: {'; '.join(r.detail for _, r in outcomes)}"
            )

        done = sum(1 for _, r in outcomes if r.ok)
        summary = f"{node.name}: completed {done} of {len(outcomes)} actions."
        if observation:
            summary += f" Observed page: {observation}"
        return summary

    def _step_invocation(self, step: str) -> tuple[str, ...] | None:
        m = _OPEN_RE.match(step)
        if m:
            return ("browser.open", m.group(1))
        m = _ENTER_RE.match(step)
        if m:
            value, field_name = m.groups()
            return ("browser.fill", field_name, value)
        m = _SET_DATE_RE.match(step)
        if m:
            return ("browser.fill", "date", m.group(1))
        m = _CLICK_RE.match(step)
        if m:
            return ("browser.click", m.group(1))
        m = _SELECT_RE.match(step)
        if m:
            return ("browser.click", m.group(1))
        m = _FETCH_RE.match(step)
        if m:
            return ("api.fetch", m.group(1))
        if _READ_RE.match(step):
            return ("browser.read",)
        return None

    def _summarize(self, node: WorkflowNode, history: list[tuple[str, str]]) -> str:
        by_name = dict(history)
        parts = [f"# {node.name}"]
        for parent in node.parent:
            parts.append(f"## {parent}\n{by_name.get(parent, '(missing input)')}")
        return "\n\n".join(parts)


# ---------------------------------------------------------------------------
# LLM-driven agent.

_AGENT_SYSTEM_PROMPT = (
    "You are a web sub-task agent. Reply with exactly one JSON object: "
    '{"action": "<tool name or finish>", "args": [..], "output": "<final text when finishing>"}.'
)


class LlmNodeAgent:
    """Drives a backend through one tool call per turn until it finishes."""

    def __init__(self, gateway: LlmGateway, model_id: str = "default"):
        self.gateway = gateway
        self.model_id = model_id

    async def run(
        self,
        node: WorkflowNode,
        history: list[tuple[str, str]],
        gate: ToolGate,
    ) -> str:
        transcript: list[str] = []
        ancestors = "\n".join(f"[{name}] {output}" for name, output in history) or "(none)"
        base = (
            f"{_AGENT_SYSTEM_PROMPT}\n\n"
            f"Sub-task prompt:\n{node.prompt}\n\n"
            f"Allowed tools: {list(gate.allowed)}\n"
            f"Ancestor results:\n{ancestors}\n"
        )
        for _ in range(gate.budget + 1):
            content = base
            if transcript:
                content += "\nActions so far:\n" + "\n".join(transcript)
            request = LlmRequest(
                system_prompt=_AGENT_SYSTEM_PROMPT,
                user_content=content,
                model_id=self.model_id,
            )
            try:
                reply = extract_json(await self.gateway.complete(request))
            except Exception as exc:
                raise AgentError(f"agent reply unusable: {exc}") from exc
            action = str(reply.get("action", ""))
            if action == "finish":
                return str(reply.get("output", ""))
            args = [str(a) for a in reply.get("args", [])]
            result = await gate.invoke(action, *args)
            transcript.append(f"{action}({', '.join(args)}) -> ok={result.ok}: {result.detail}")
        raise ActionBudgetExceeded(gate.budget)
