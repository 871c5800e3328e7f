"""LLM backends: a deterministic rule-based mock, a thin HTTP chat
backend, and a scripted backend for fault-injection tests.

The mock dispatches on the first line of the system prompt and derives
its reply purely from the request content, so identical inputs always
produce identical replies.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Sequence
from urllib.parse import urlparse

import httpx

from .capture import parse_log_line, split_input_description
from .gateway import LlmError, LlmRequest, TransientBackendError

CITY_CODES = {
    "New York": "NYC",
    "San Francisco": "SFO",
    "Los Angeles": "LAX",
    "Chicago": "CHI",
    "Boston": "BOS",
    "Seattle": "SEA",
}

CONSTRAINT_TERMS = frozenset(
    {"one-way", "round-trip", "economy", "business", "first class", "nonstop", "direct"}
)

FLIGHT_INTERESTS = ["price", "departure date", "airline"]

SEARCH_TRIGGER_TEXTS = frozenset({"search", "go", "find", "submit"})

_DATE_RE = re.compile(r"^\d{4}-\d{2}-\d{2}$")
_EMAIL_RE = re.compile(r"^[^@\s]+@[^@\s]+\.[^@\s]+$")
_DOMAIN_RE = re.compile(r"^[a-z0-9-]+(\.[a-z0-9-]+)+$")
_DECODER = json.JSONDecoder()


def _is_date(value: str) -> bool:
    return bool(_DATE_RE.match(value))


def _is_email(value: str) -> bool:
    return bool(_EMAIL_RE.match(value))


def domain_of(url: str) -> str:
    parsed = urlparse(url if "//" in url else f"https://{url}")
    host = parsed.netloc or parsed.path.split("/", 1)[0]
    return host.removeprefix("www.").lower()


def _dedupe(items: Sequence[str]) -> list[str]:
    seen: set[str] = set()
    out: list[str] = []
    for item in items:
        if item not in seen:
            seen.add(item)
            out.append(item)
    return out


def _camel(text: str) -> str:
    return "".join(part.capitalize() for part in re.split(r"[^0-9A-Za-z]+", text) if part)


@dataclass
class _LogEntry:
    kind: str
    value: str | None = None
    field_name: str | None = None
    text: str | None = None
    url: str | None = None


def _parse_entries(log_text: str) -> list[_LogEntry]:
    entries: list[_LogEntry] = []
    for line in log_text.splitlines():
        if not line.strip():
            continue
        _, kind, desc = parse_log_line(line)
        if kind == "text_input":
            value, field_name = split_input_description(desc)
            entries.append(_LogEntry(kind, value=value, field_name=field_name))
        elif kind == "text_select":
            entries.append(_LogEntry(kind, value=desc))
        elif kind == "navigation":
            entries.append(_LogEntry(kind, url=desc))
        else:
            text = None if desc.startswith("<") else desc
            entries.append(_LogEntry(kind, text=text))
    return entries


def _block_after(content: str, marker: str) -> str:
    idx = content.find(marker)
    if idx == -1:
        raise LlmError(f"mock backend: marker {marker!r} not found in request")
    return content[idx + len(marker):]


def _log_block(content: str) -> str:
    block = _block_after(content, "Log content:\n")
    end = block.find("\n\nDo not add")
    return block[:end] if end != -1 else block


def _json_after(content: str, marker: str):
    tail = _block_after(content, marker)
    idx = 0
    while idx < len(tail) and tail[idx] not in "{[\"0123456789tfn":
        idx += 1
    value, _ = _DECODER.raw_decode(tail, idx)
    return value


class MockLlmBackend:
    """Deterministic agent imitation driven by rule tables."""

    async def complete(self, request: LlmRequest) -> str:
        head = request.system_prompt
        if head.startswith("You are a context analysis system"):
            return json.dumps(_context_rule(_log_block(request.user_content)), ensure_ascii=False)
        if head.startswith("You are an action analysis system"):
            return json.dumps(_action_rule(_log_block(request.user_content)), ensure_ascii=False)
        if head.startswith("You are a synthesis system"):
            context = _json_after(request.user_content, "Context information:\n")
            action = _json_after(request.user_content, "Action information:\n")
            return json.dumps(_synthesis_rule(context, action), ensure_ascii=False)
        if head.startswith("You are the IDENTIFIER agent"):
            workflow = _json_after(request.user_content, "Current_workflow: ")
            return json.dumps(_identifier_rule(workflow), ensure_ascii=False)
        if head.startswith("You are the agent that finalizes the workflow"):
            payload = _json_after(request.user_content, "User message content:\n")
            return json.dumps(
                _filler_rule(
                    payload["semantic_workflow"],
                    payload["user_instruction"],
                    payload["original_workflow"],
                ),
                ensure_ascii=False,
            )
        raise LlmError(f"mock backend: no rule for system prompt {head!r}")


# ---------------------------------------------------------------------------
# Context analysis rule.

def _context_rule(log_text: str) -> dict:
    entries = _parse_entries(log_text)
    flight = "flight" in log_text.lower()

    values = _dedupe([e.value for e in entries if e.kind in ("text_input", "text_select") and e.value])
    entities = _dedupe([domain_of(e.url) for e in entries if e.kind == "navigation" and e.url])
    clicked = [e.text for e in entries if e.kind == "click" and e.text]
    constraints = _dedupe([t.lower() for t in clicked if t.lower() in CONSTRAINT_TERMS])

    if flight:
        interests = list(FLIGHT_INTERESTS)
    elif clicked:
        interests = _dedupe([t.lower() for t in clicked])[:3]
    else:
        interests = entities[:3]

    cities = [v for v in values if not _is_date(v) and not _is_email(v)]
    if flight and len(cities) >= 2:
        origin, destination = cities[0], cities[1]
        mode = "one-way " if "one-way" in constraints else ""
        goal = (
            f"Book a {mode}flight from {CITY_CODES.get(origin, origin)}"
            f" to {CITY_CODES.get(destination, destination)}"
        )
    elif entities and values:
        goal = f"Complete a task on {entities[0]} involving '{values[0]}'"
    elif entities:
        goal = f"Complete the demonstrated task on {entities[0]}"
    else:
        goal = "Complete the demonstrated task"

    return {
        "goal": goal,
        "interests": interests,
        "constraints": constraints,
        "values": values,
        "entities": entities,
    }


# ---------------------------------------------------------------------------
# Action analysis rule.

def _flush_pending(pending: list[tuple[str, str | None]], actions: list[str]) -> None:
    for value, field_name in pending:
        if field_name:
            actions.append(f"enter '{value}' into '{field_name}'")
        else:
            actions.append(f"enter '{value}'")
    pending.clear()


def _action_rule(log_text: str) -> dict:
    entries = _parse_entries(log_text)
    flight = "flight" in log_text.lower()

    actions: list[str] = []
    pending: list[tuple[str, str | None]] = []
    current_domain: str | None = None

    def emit(action: str) -> None:
        if not actions or actions[-1] != action:
            actions.append(action)

    for entry in entries:
        if entry.kind == "navigation":
            _flush_pending(pending, actions)
            d = domain_of(entry.url or "")
            if d and d != current_domain:
                emit(f"open {d}")
                current_domain = d
        elif entry.kind == "text_input":
            pending.append((entry.value or "", entry.field_name))
        elif entry.kind == "text_select":
            emit(f"select '{entry.value}'")
        elif entry.kind == "form_submit":
            _flush_pending(pending, actions)
            emit("submit form")
        elif entry.kind == "click":
            text_l = (entry.text or "").lower()
            triggers = pending and (text_l in SEARCH_TRIGGER_TEXTS or "search" in text_l)
            if triggers and flight:
                cities = [v for v, _ in pending if not _is_date(v) and not _is_email(v)]
                dates = [v for v, _ in pending if _is_date(v)]
                if len(cities) >= 2 and dates:
                    consumed = {cities[0], cities[1], dates[0]}
                    leftovers = [(v, f) for v, f in pending if v not in consumed]
                    pending.clear()
                    _flush_pending(leftovers, actions)
                    emit(f"search flights {cities[0]} -> {cities[1]} on {dates[0]}")
                    continue
            if triggers:
                query = pending[-1][0]
                leftovers = pending[:-1]
                pending.clear()
                _flush_pending(leftovers, actions)
                emit(f"search for '{query}'")
            elif entry.text:
                emit(f"click '{entry.text}'")
            else:
                emit("click element")
    _flush_pending(pending, actions)

    segments: list[list[_LogEntry]] = []
    for entry in entries:
        if entry.kind == "navigation" or not segments:
            segments.append([])
        segments[-1].append(entry)

    sites = _dedupe(
        [domain_of(e.url) for seg in segments for e in seg if e.kind == "navigation" and e.url]
    )

    phases: list[str] = []
    for seg in segments:
        kinds = {e.kind for e in seg}
        has_trigger_click = any(
            e.kind == "click"
            and e.text
            and (e.text.lower() in SEARCH_TRIGGER_TEXTS or "search" in e.text.lower())
            for e in seg
        )
        if "form_submit" in kinds:
            phases.append("checkout")
        elif "text_input" in kinds and has_trigger_click:
            phases.append("search")
        elif "text_input" in kinds:
            phases.append("enter text")
        elif "click" in kinds:
            phases.append("select result")
        else:
            phases.append("browse")

    confidence = round(0.5 + 0.05 * min(len(actions), 9), 2)
    return {"actions": actions, "sites": sites, "phases": phases, "confidence": confidence}


# ---------------------------------------------------------------------------
# Workflow synthesis rule.

_PHASE_TOOLS = {
    "search": ["browser.open", "browser.fill", "browser.click"],
    "select result": ["browser.click", "browser.read"],
    "checkout": ["browser.click", "browser.fill"],
    "enter text": ["browser.fill"],
    "browse": ["browser.open", "browser.read"],
}

_SEARCH_FLIGHTS_RE = re.compile(r"^search flights (.+) -> (.+) on (\S+)$")
_SEARCH_FOR_RE = re.compile(r"^search for '(.*)'$")
_ENTER_RE = re.compile(r"^enter '(.*?)'(?: into '(.*)')?$")


def _steps_for(action: str) -> list[str]:
    m = _SEARCH_FLIGHTS_RE.match(action)
    if m:
        origin, destination, date = m.groups()
        return [
            f"enter '{origin}' into 'From' field",
            f"enter '{destination}' into 'To' field",
            f"set date to '{date}'",
            "click 'Search'",
        ]
    m = _SEARCH_FOR_RE.match(action)
    if m:
        return [f"enter '{m.group(1)}' into 'search' field", "click 'Search'"]
    m = _ENTER_RE.match(action)
    if m:
        value, field_name = m.groups()
        return [f"enter '{value}' into '{field_name or 'details'}' field"]
    if action.startswith("open "):
        return [f"open {action.removeprefix('open ')} in a new tab"]
    if action.startswith("select '"):
        return [f"select the text {action.removeprefix('select ')}"]
    if action == "submit form":
        return ["click 'Submit'"]
    return [action]


def _phase_purpose(label: str, site: str, plural: str, singular: str) -> str:
    if label == "search":
        return f"search {plural.lower()} on {site}"
    if label == "select result":
        return f"select a {singular.lower()} from the results on {site}"
    if label == "checkout":
        return f"complete checkout on {site}"
    if label == "enter text":
        return f"enter the required details on {site}"
    if label == "browse":
        return f"browse {site} and collect relevant content"
    return f"carry out the {label} phase on {site}"


def _phase_outputs(label: str, plural: str, singular: str) -> str:
    return {
        "search": f"results page showing {plural.lower()}",
        "select result": f"the chosen {singular.lower()} details",
        "checkout": "order confirmation",
        "enter text": "form filled with the required details",
        "browse": "relevant page content",
    }.get(label, "the phase outcome")


def _phase_contingency(label: str) -> str:
    return {
        "search": "if 'Search' button not visible, submit the form by pressing Enter.",
        "select result": "if no result matches, pick the first listed option.",
        "checkout": "if submission fails, retry once.",
        "enter text": "if a field is missing, skip it and note the gap.",
        "browse": "if the page fails to load, reload it once.",
    }.get(label, "if the expected element is not visible, read the page and retry once.")


def _synthesis_rule(context: dict, action: dict) -> dict:
    phases = list(action.get("phases") or ["browse"])
    sites = list(action.get("sites") or context.get("entities") or ["the web"])
    actions = list(action.get("actions") or [])
    values = list(context.get("values") or [])
    interests = list(context.get("interests") or [])

    flight = "flight" in str(context.get("goal", "")).lower() or any(
        a.startswith("search flights") for a in actions
    )
    if flight:
        plural, singular = "Flights", "Flight"
    elif interests:
        plural = singular = _camel(interests[0]) or "Items"
    else:
        plural = singular = _camel(sites[0].split(".")[0]) or "Items"

    def site_for(i: int) -> str:
        return sites[min(i, len(sites) - 1)]

    # Allocate actions to phases: a search or submit closes its phase, a
    # later open starts the next one.
    allocation: list[list[str]] = [[] for _ in phases]
    idx = 0
    for pos, act in enumerate(actions):
        if act.startswith("open ") and pos > 0:
            idx = min(idx + 1, len(phases) - 1)
        allocation[idx].append(act)
        if act.startswith("search ") or act == "submit form":
            idx = min(idx + 1, len(phases) - 1)

    name_of: list[str] = []
    used: set[str] = set()
    for i, label in enumerate(phases):
        if label == "search":
            base = f"Search{plural}"
        elif label == "select result":
            base = f"Select{singular}"
        elif label == "checkout":
            base = "Checkout"
        elif label == "enter text":
            base = "EnterDetails"
        elif label == "browse":
            base = f"Browse{_camel(site_for(i).split('.')[0])}"
        else:
            base = _camel(label) or f"Phase{i + 1}"
        name = base
        serial = 2
        while name in used:
            name = f"{base}{serial}"
            serial += 1
        used.add(name)
        name_of.append(name)

    # Consecutive phases chain when they share a site or a concrete value;
    # otherwise a new independent branch starts.
    chains: list[list[int]] = []
    for i in range(len(phases)):
        if i == 0:
            chains.append([i])
            continue
        shared_site = site_for(i) == site_for(i - 1)
        prev_vals = {v for v in values if any(v in a for a in allocation[i - 1])}
        here_vals = {v for v in values if any(v in a for a in allocation[i])}
        if shared_site or (prev_vals & here_vals):
            chains[-1].append(i)
        else:
            chains.append([i])

    parent_of: dict[int, list[str]] = {i: [] for i in range(len(phases))}
    children_of: dict[int, list[str]] = {i: [] for i in range(len(phases))}
    for chain in chains:
        for prev, here in zip(chain, chain[1:]):
            children_of[prev].append(name_of[here])
            parent_of[here].append(name_of[prev])

    sink_name = "SummarizeResults"
    serial = 2
    while sink_name in used:
        sink_name = f"SummarizeResults{serial}"
        serial += 1

    nodes: list[dict] = []
    for i, label in enumerate(phases):
        site = site_for(i)
        steps = [step for act in allocation[i] for step in _steps_for(act)]
        if not steps:
            steps = [f"carry out the {label} phase on {site}"]
        numbered = " ".join(f"{n}) {s};" for n, s in enumerate(steps, start=1))
        inputs = [v for v in values if any(v in a for a in allocation[i])]
        inputs_text = ",".join(f"'{v}'" for v in inputs) if inputs else "UI-provided"
        head_of_chain = not parent_of[i]
        preconditions = (
            f"on {site} home page;"
            if head_of_chain
            else f"results of '{parent_of[i][0]}' visible;"
        )
        tools = list(_PHASE_TOOLS.get(label, ["browser.open", "browser.read"]))
        if head_of_chain and "browser.open" not in tools:
            tools.insert(0, "browser.open")
        prompt = (
            f"Purpose: {_phase_purpose(label, site, plural, singular)}. "
            f"Inputs: {inputs_text}. "
            f"Outputs: {_phase_outputs(label, plural, singular)}. "
            f"Preconditions: {preconditions} "
            f"Steps: {numbered} "
            f"Contingency: {_phase_contingency(label)}"
        )
        is_leaf = not children_of[i]
        nodes.append(
            {
                "name": name_of[i],
                "parent": list(parent_of[i]),
                "children": list(children_of[i]) + ([sink_name] if is_leaf else []),
                "tools": tools,
                "prompt": prompt,
            }
        )

    leaves = [name_of[chain[-1]] for chain in chains]
    nodes.append(
        {
            "name": sink_name,
            "parent": leaves,
            "children": [],
            "tools": [],
            "prompt": (
                "Purpose: synthesize the results of previous nodes into a final summary. "
                "Inputs: Outputs of parent nodes. "
                "Outputs: a concise structured summary of the workflow results. "
                "Preconditions: all parent nodes completed; "
                "Steps: 1) collect the outputs of all parent nodes; 2) merge them into one report; "
                "Contingency: if a parent output is missing, summarize the available results and note the gap."
            ),
        }
    )
    return {"nodes": nodes}


# ---------------------------------------------------------------------------
# Identifier rule.

def _classify(value: str, ordinal: int, flight: bool, city_rank: int) -> tuple[str, str]:
    if _is_date(value):
        return "TARGET_DATE", "calendar date the task operates on"
    if _is_email(value):
        return "USER_EMAIL", "email address of the user"
    if _DOMAIN_RE.match(value):
        return "SITE_DOMAIN", "website domain the task runs on"
    if flight and city_rank == 0:
        return "ORIGIN_CITY", "city the trip starts from"
    if flight and city_rank == 1:
        return "DESTINATION_CITY", "city the trip goes to"
    if any(ch.isdigit() for ch in value):
        return "SEARCH_TERM_PRODUCT_NAME", "product or item the user searched for"
    return f"TASK_VALUE_{ordinal}", "task-specific value observed in the demonstration"


def _identifier_rule(workflow: dict) -> dict:
    out = json.loads(json.dumps(workflow))
    nodes = out.get("nodes", [])
    context = out.get("context_info", {})
    action = out.get("action_info", {})
    flight = "flight" in str(context.get("goal", "")).lower()

    candidates = _dedupe(
        list(context.get("values") or [])
        + list(action.get("sites") or [])
        + list(context.get("entities") or [])
    )
    haystack = " ".join(n.get("name", "") + " " + n.get("prompt", "") for n in nodes)
    literals = [v for v in candidates if len(v) >= 3 and v in haystack]

    assignments: list[tuple[str, str, str]] = []
    used_names: set[str] = set()
    city_rank = 0
    for ordinal, literal in enumerate(literals, start=1):
        name, description = _classify(literal, ordinal, flight, city_rank)
        if name in ("ORIGIN_CITY", "DESTINATION_CITY"):
            city_rank += 1
        serial = 2
        while name in used_names:
            name = f"{name}_{serial}"
            serial += 1
        used_names.add(name)
        assignments.append((literal, name, description))

    # Longest literal first so substrings of other literals survive.
    for literal, placeholder, _ in sorted(assignments, key=lambda a: -len(a[0])):
        for node in nodes:
            node["name"] = node["name"].replace(literal, placeholder)
            node["prompt"] = node["prompt"].replace(literal, placeholder)

    variables = []
    for literal, placeholder, description in assignments:
        paths: list[str] = []
        for node in nodes:
            if placeholder in node["name"]:
                paths.append(f"nodes[{node['name']}].name")
            for occurrence in range(node["prompt"].count(placeholder)):
                paths.append(f"nodes[{node['name']}].prompt#{occurrence}")
        variables.append(
            {
                "placeholder": placeholder,
                "semantic_description": description,
                "paths": paths,
                "example_values": [literal],
            }
        )

    out["semantic_variables"] = variables
    return out


# ---------------------------------------------------------------------------
# Filler rule.

_STEPS_SECTION_RE = re.compile(r"Steps:.*?(?=Contingency:|$)", re.DOTALL)
_OPEN_REQUEST_RE = re.compile(r"(?:leave|keep)\s+([A-Z][A-Z0-9_]{2,})\s+open", re.IGNORECASE)
_INSTEAD_OF_RE = re.compile(r"(.+?)\s+instead\s+of\s+(.+)", re.IGNORECASE)
_CLAUSE_SPLIT_RE = re.compile(r"[,;]|\band\b")

GENERALIZED_STEPS = "Steps: follow the generalized procedure for this sub-task, adapted to the inputs. "


def _trailing_value(phrase: str) -> str:
    """The concrete value at the end of a clause like 'fly from Boston'."""
    phrase = phrase.strip()
    if (phrase.startswith("'") and phrase.endswith("'")) or (
        phrase.startswith('"') and phrase.endswith('"')
    ):
        return phrase[1:-1]
    tokens = phrase.split()
    run: list[str] = []
    for token in reversed(tokens):
        if token[:1].isupper() or token[:1].isdigit() or "@" in token or "." in token:
            run.append(token)
        else:
            break
    picked = " ".join(reversed(run)) if run else (tokens[-1] if tokens else phrase)
    return picked.strip("'\"").rstrip(".,;!?")


def _replacement_pairs(instruction: str) -> list[tuple[str, str]]:
    pairs: list[tuple[str, str]] = []
    for clause in _CLAUSE_SPLIT_RE.split(instruction):
        m = _INSTEAD_OF_RE.search(clause)
        if m:
            pairs.append((_trailing_value(m.group(1)), _trailing_value(m.group(2))))
    return pairs


def _filler_rule(semantic_workflow: dict, instruction: str, original_workflow: dict) -> dict:
    variables = semantic_workflow.get("semantic_variables", [])
    instruction = instruction or ""
    open_requests = {m.upper() for m in _OPEN_REQUEST_RE.findall(instruction)}
    replacement_pairs = _replacement_pairs(instruction)
    use_original = "original value" in instruction.lower()

    fills: dict[str, str] = {}
    notes: list[dict] = []
    for var in variables:
        placeholder = var["placeholder"]
        example = (var.get("example_values") or [""])[0]
        if placeholder in open_requests:
            notes.append(
                {
                    "placeholder": placeholder,
                    "decision": "left open as requested",
                    "source": "user_instruction",
                }
            )
            continue
        matched = next(
            (new for new, old in replacement_pairs if old.lower() == example.lower()), None
        )
        if matched is not None:
            fills[placeholder] = matched
        elif use_original:
            fills[placeholder] = example
        else:
            fills[placeholder] = example
            notes.append(
                {
                    "placeholder": placeholder,
                    "decision": f"no instruction for {placeholder}; defaulted to example value '{example}'",
                    "source": "inferred_default",
                }
            )

    nodes = json.loads(json.dumps(semantic_workflow.get("nodes", [])))
    for node in nodes:
        prompt = _STEPS_SECTION_RE.sub(GENERALIZED_STEPS, node["prompt"])
        for placeholder, value in fills.items():
            prompt = prompt.replace(placeholder, value)
            node["name"] = node["name"].replace(placeholder, value)
        node["prompt"] = prompt

    value_updates = {
        (var.get("example_values") or [""])[0]: fills[var["placeholder"]]
        for var in variables
        if var["placeholder"] in fills
    }
    context = json.loads(json.dumps(original_workflow.get("context_info", {})))
    context["values"] = [value_updates.get(v, v) for v in context.get("values", [])]
    context["entities"] = [value_updates.get(v, v) for v in context.get("entities", [])]
    action = json.loads(json.dumps(original_workflow.get("action_info", {})))
    action["sites"] = [value_updates.get(v, v) for v in action.get("sites", [])]

    return {
        "timestamp": original_workflow.get("timestamp", ""),
        "context_info": context,
        "action_info": action,
        "nodes": nodes,
        "fill_notes": notes,
    }


# ---------------------------------------------------------------------------
# Network and scripted backends.

class NetworkLlmBackend:
    """Chat-completions style HTTP backend.

    Transport failures and 5xx replies surface as TransientBackendError
    so the gateway retries them; anything else is a hard LlmError.
    """

    def __init__(
        self,
        endpoint_url: str,
        *,
        api_key: str | None = None,
        timeout_s: float = 60.0,
        transport: httpx.AsyncBaseTransport | None = None,
    ):
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.AsyncClient(
            base_url=endpoint_url.rstrip("/"),
            headers=headers,
            timeout=timeout_s,
            transport=transport,
        )

    async def complete(self, request: LlmRequest) -> str:
        body = {
            "model": request.model_id,
            "temperature": request.temperature,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_content},
            ],
        }
        try:
            response = await self._client.post("/chat/completions", json=body)
        except httpx.TransportError as exc:
            raise TransientBackendError(f"transport failure: {exc}") from exc
        if response.status_code >= 500:
            raise TransientBackendError(f"server error {response.status_code}")
        if response.status_code != 200:
            raise LlmError(f"backend rejected request: {response.status_code} {response.text[:200]}")
        try:
            return response.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise LlmError(f"malformed backend reply: {exc}") from exc

    async def aclose(self) -> None:
        await self._client.aclose()


class ScriptedLlmBackend:
    """Replays a fixed sequence of replies or exceptions; for tests."""

    def __init__(self, script: Sequence[str | Exception]):
        self._script = list(script)
        self.requests: list[LlmRequest] = []

    async def complete(self, request: LlmRequest) -> str:
        self.requests.append(request)
        if not self._script:
            raise LlmError("scripted backend exhausted")
        item = self._script.pop(0)
        if isinstance(item, Exception):
            raise item
        return item
