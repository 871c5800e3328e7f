"""LLM gateway: prompt template assets, JSON extraction, and validated
completions with bounded retries and a concurrency cap.

Every agent call goes through complete_validated, which enforces a named
JSON contract on the reply and retries malformed output with a corrective
instruction.
"""

from __future__ import annotations

import asyncio
import json
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from typing import Protocol

CORRECTIVE_INSTRUCTION = (
    "Your previous output was not a single valid JSON object. Return exactly one JSON object."
)

PROMPT_FILES = {
    "context": "context_analysis.txt",
    "action": "action_analysis.txt",
    "synthesis": "workflow_synthesis.txt",
    "identifier": "semantic_identifier.txt",
    "filler": "placeholder_filler.txt",
}

# Slot markers are substituted in a single pass so slot-like text inside
# substituted values is never expanded again.
_SLOT_RE = re.compile(
    r"\{(log_text|context_info|action_info|current_workflow|user_text|agent1_output)\}"
)

_DECODER = json.JSONDecoder()


class LlmError(Exception):
    """Base class for gateway and backend failures."""


class TransientBackendError(LlmError):
    """The backend failed in a way worth retrying (timeouts, 5xx)."""


class JsonExtractionError(LlmError):
    """No JSON object could be extracted from the reply."""

    def __init__(self, raw: str):
        super().__init__(f"no JSON object in reply of {len(raw)} chars")
        self.raw = raw


class ContractViolationError(LlmError):
    """The reply parsed but is missing required keys."""

    def __init__(self, contract_name: str, raw: str, missing: list[str]):
        super().__init__(f"{contract_name}: missing keys {missing}")
        self.contract_name = contract_name
        self.raw = raw
        self.missing = missing


@dataclass(frozen=True)
class LlmRequest:
    system_prompt: str
    user_content: str
    model_id: str = "default"
    temperature: float = 0.0


class LlmBackend(Protocol):
    async def complete(self, request: LlmRequest) -> str: ...


@lru_cache(maxsize=None)
def load_template(role: str) -> str:
    """Load a prompt template asset by role name."""
    try:
        filename = PROMPT_FILES[role]
    except KeyError:
        raise KeyError(f"unknown prompt role {role!r}; known: {sorted(PROMPT_FILES)}") from None
    return resources.files("demoflow").joinpath("prompts", filename).read_text(encoding="utf-8")


def fill_template(template: str, slots: dict[str, str]) -> str:
    """Substitute slot markers in one pass.

    Templates contain literal JSON braces, so only the named slot markers
    are touched; everything else passes through untouched.
    """
    def sub(match: re.Match) -> str:
        key = match.group(1)
        if key not in slots:
            raise KeyError(f"template slot {{{key}}} has no value")
        return slots[key]

    return _SLOT_RE.sub(sub, template)


def build_request(role: str, slots: dict[str, str], model_id: str = "default") -> LlmRequest:
    """Fill a template and wrap it as a request.

    The system prompt is the template's first line; backends key their
    behavior on it. The full filled template travels as user content.
    """
    filled = fill_template(load_template(role), slots)
    system_prompt = filled.split("\n", 1)[0]
    return LlmRequest(system_prompt=system_prompt, user_content=filled, model_id=model_id)


def extract_json(raw: str) -> dict:
    """Return the first maximal well-formed JSON object in raw text.

    Fences, prose, and leading junk are skipped by scanning for candidate
    opening braces; non-object JSON values are ignored.
    """
    idx = raw.find("{")
    while idx != -1:
        try:
            obj, _ = _DECODER.raw_decode(raw, idx)
        except json.JSONDecodeError:
            obj = None
        if isinstance(obj, dict):
            return obj
        idx = raw.find("{", idx + 1)
    raise JsonExtractionError(raw)


@dataclass(frozen=True)
class JsonContract:
    """Named set of required key paths (dots descend into objects)."""

    name: str
    required_keys: tuple[str, ...]

    def missing_keys(self, obj: dict) -> list[str]:
        missing: list[str] = []
        for path in self.required_keys:
            cursor: object = obj
            for part in path.split("."):
                if isinstance(cursor, dict) and part in cursor:
                    cursor = cursor[part]
                else:
                    missing.append(path)
                    break
        return missing


CONTRACTS: dict[str, JsonContract] = {
    "context_info": JsonContract(
        "context_info", ("goal", "interests", "constraints", "values", "entities")
    ),
    "action_info": JsonContract("action_info", ("actions", "sites", "phases", "confidence")),
    "workflow": JsonContract("workflow", ("nodes",)),
    "semantic_workflow": JsonContract("semantic_workflow", ("nodes", "semantic_variables")),
    "filled_workflow": JsonContract(
        "filled_workflow", ("timestamp", "context_info", "action_info", "nodes", "fill_notes")
    ),
}


class LlmGateway:
    """Serializes access to a backend with retries and a concurrency cap."""

    def __init__(self, backend: LlmBackend, *, max_retries: int = 2, concurrency: int = 4):
        if max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if concurrency < 1:
            raise ValueError("concurrency must be >= 1")
        self.backend = backend
        self.max_retries = max_retries
        self._semaphore = asyncio.Semaphore(concurrency)

    async def complete(self, request: LlmRequest) -> str:
        async with self._semaphore:
            return await self.backend.complete(request)

    async def complete_validated(
        self,
        request: LlmRequest,
        contract: JsonContract,
        *,
        max_retries: int | None = None,
    ) -> dict:
        """Complete and enforce the contract, retrying bad replies.

        Transient backend errors retry the unchanged request; malformed
        or incomplete replies retry with a corrective instruction
        appended. The total attempt count is 1 + max_retries. The last
        failure is re-raised when retries run out.
        """
        budget = self.max_retries if max_retries is None else max_retries
        attempt_request = request
        last_error: LlmError = LlmError("no attempts made")
        for _ in range(budget + 1):
            try:
                raw = await self.complete(attempt_request)
            except TransientBackendError as exc:
                last_error = exc
                continue
            try:
                obj = extract_json(raw)
            except JsonExtractionError as exc:
                last_error = exc
                attempt_request = _with_correction(attempt_request)
                continue
            missing = contract.missing_keys(obj)
            if missing:
                last_error = ContractViolationError(contract.name, raw, missing)
                attempt_request = _with_correction(attempt_request)
                continue
            return obj
        raise last_error


def _with_correction(request: LlmRequest) -> LlmRequest:
    if request.user_content.endswith(CORRECTIVE_INSTRUCTION):
        return request
    return replace(
        request, user_content=request.user_content + "\n\n" + CORRECTIVE_INSTRUCTION
    )
