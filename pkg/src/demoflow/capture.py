"""Demonstration capture: wire-event parsing, noise filtering, input
debouncing, and deterministic log rendering.

The capture pipeline is ``parse -> filter -> debounce``; the result is a
list of finalized events that renders to a plain-text log, one line per
event, suitable for feeding to analysis agents.
"""

from __future__ import annotations

import json
import re
from bisect import insort_right
from dataclasses import dataclass, field, replace
from datetime import datetime
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Sequence

EVENT_KINDS = ("click", "text_select", "text_input", "form_submit", "navigation")

KIND_LABELS = {
    "click": "Click",
    "text_select": "Select",
    "text_input": "Input",
    "form_submit": "Submit",
    "navigation": "Navigate",
}

LABEL_KINDS = {label: kind for kind, label in KIND_LABELS.items()}

# Tags that carry no signal on their own; events on them are dropped unless
# the element has an id, a role, or visible text.
LOW_INFO_TAGS = frozenset({"div", "span", "body", "html", "section"})

VISIBLE_TEXT_LIMIT = 200
DEBOUNCE_WINDOW_MS = 500
CLICK_DEDUPE_WINDOW_MS = 300

_LOG_LINE_RE = re.compile(r"^\[([^\]]+)\] (Click|Select|Input|Submit|Navigate): (.*)$")
_INPUT_FIELD_RE = re.compile(r"^(.*) into '([^']*)'$")
_LINE_BREAKS_RE = re.compile(r"[\r\n]+")


class EventRejected(ValueError):
    """A wire event failed schema validation."""

    def __init__(self, field_name: str, reason: str, lineno: int | None = None):
        where = f" (line {lineno})" if lineno is not None else ""
        super().__init__(f"{field_name}: {reason}{where}")
        self.field_name = field_name
        self.reason = reason
        self.lineno = lineno


class EmptyLogError(ValueError):
    """Rendering was requested for a log with no events."""


@dataclass(frozen=True)
class ElementMeta:
    """Metadata of the DOM element an event targeted."""

    tag: str
    element_id: str | None = None
    classes: tuple[str, ...] = ()
    role: str | None = None
    visible_text: str | None = None
    input_name: str | None = None


@dataclass(frozen=True)
class RawEvent:
    """One interaction event as captured on the wire."""

    timestamp: str
    kind: str
    page_url: str
    page_title: str
    target: ElementMeta
    value: str | None = None


@dataclass(frozen=True)
class DemoEvent(RawEvent):
    """An event that survived filtering; ``finalized`` is False only for
    text inputs that have not yet passed debouncing."""

    finalized: bool = True


@lru_cache(maxsize=4096)
def _parse_ts(timestamp: str) -> datetime:
    # fromisoformat on 3.10 does not accept a trailing Z
    return datetime.fromisoformat(timestamp.replace("Z", "+00:00"))


def _gap_ms(earlier: RawEvent, later: RawEvent) -> float:
    return (_parse_ts(later.timestamp) - _parse_ts(earlier.timestamp)).total_seconds() * 1000.0


def _target_key(event: RawEvent) -> tuple:
    # value is deliberately excluded: a burst of typing must share one key
    t = event.target
    return (event.page_url, t.tag, t.element_id, t.input_name, t.role, t.classes, t.visible_text)


def parse_event(obj: dict, *, lineno: int | None = None) -> RawEvent:
    """Validate one wire-format event object and return a RawEvent.

    Raises EventRejected naming the offending field.
    """
    def fail(field_name: str, reason: str) -> EventRejected:
        return EventRejected(field_name, reason, lineno)

    if not isinstance(obj, dict):
        raise fail("event", "expected a JSON object")

    timestamp = obj.get("timestamp")
    if not isinstance(timestamp, str) or not timestamp:
        raise fail("timestamp", "missing or not a string")
    try:
        _parse_ts(timestamp)
    except ValueError:
        raise fail("timestamp", f"not an ISO-8601 instant: {timestamp!r}") from None

    kind = obj.get("kind")
    if kind not in EVENT_KINDS:
        raise fail("kind", f"unknown kind {kind!r}")

    page_url = obj.get("page_url", "")
    if not isinstance(page_url, str):
        raise fail("page_url", "not a string")
    if kind == "navigation" and not page_url:
        raise fail("page_url", "navigation events require a page URL")

    page_title = obj.get("page_title", "")
    if not isinstance(page_title, str):
        raise fail("page_title", "not a string")

    target_obj = obj.get("target")
    if not isinstance(target_obj, dict):
        raise fail("target", "missing or not an object")
    tag = target_obj.get("tag")
    if not isinstance(tag, str) or not tag.strip():
        raise fail("target.tag", "missing or empty")

    classes_obj = target_obj.get("classes", [])
    if not isinstance(classes_obj, list) or any(not isinstance(c, str) for c in classes_obj):
        raise fail("target.classes", "not a list of strings")

    def opt_str(key: str) -> str | None:
        v = target_obj.get(key)
        if v is None:
            return None
        if not isinstance(v, str):
            raise fail(f"target.{key}", "not a string")
        return v or None

    visible_text = opt_str("visible_text")
    if visible_text is not None:
        visible_text = visible_text.strip()[:VISIBLE_TEXT_LIMIT] or None

    value = obj.get("value")
    if value is not None and not isinstance(value, str):
        raise fail("value", "not a string")

    target = ElementMeta(
        tag=tag.strip().lower(),
        element_id=opt_str("id"),
        classes=tuple(classes_obj),
        role=opt_str("role"),
        visible_text=visible_text,
        input_name=opt_str("input_name"),
    )
    return RawEvent(
        timestamp=timestamp,
        kind=kind,
        page_url=page_url,
        page_title=page_title,
        target=target,
        value=value,
    )


def read_events_jsonl(text: str) -> list[RawEvent]:
    """Parse a JSONL batch, one event object per non-blank line."""
    events: list[RawEvent] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise EventRejected("line", f"invalid JSON: {exc}", lineno) from None
        events.append(parse_event(obj, lineno=lineno))
    return events


def filter_event(event: RawEvent) -> DemoEvent | None:
    """Drop noise events; return a DemoEvent for everything that matters.

    An event is noise exactly when its target tag is low-information and
    the element has no id, no role, and no visible text.
    """
    t = event.target
    if t.tag in LOW_INFO_TAGS and t.element_id is None and t.role is None and t.visible_text is None:
        return None
    return DemoEvent(
        timestamp=event.timestamp,
        kind=event.kind,
        page_url=event.page_url,
        page_title=event.page_title,
        target=event.target,
        value=event.value,
        finalized=event.kind != "text_input",
    )


def debounce_inputs(events: Sequence[DemoEvent]) -> list[DemoEvent]:
    """Collapse bursts of text input on one target to the final value.

    A pending input is finalized when an event arrives on a different
    target, when a form submit or navigation arrives, when the debounce
    window elapses between inputs on the same target, or at end of
    stream. Duplicate clicks on one target within the dedupe window are
    dropped. The operation is idempotent.
    """
    out: list[DemoEvent] = []
    pending: DemoEvent | None = None
    last_click: dict[tuple, datetime] = {}

    def flush() -> None:
        nonlocal pending
        if pending is not None:
            out.append(pending if pending.finalized else replace(pending, finalized=True))
            pending = None

    for ev in events:
        if ev.kind == "text_input":
            if pending is not None and not (
                _target_key(ev) == _target_key(pending)
                and _gap_ms(pending, ev) <= DEBOUNCE_WINDOW_MS
            ):
                flush()
            pending = ev
            continue

        if pending is not None and (
            _target_key(ev) != _target_key(pending)
            or ev.kind in ("form_submit", "navigation")
        ):
            flush()

        if ev.kind == "click":
            key = _target_key(ev)
            seen = last_click.get(key)
            now = _parse_ts(ev.timestamp)
            if seen is not None and (now - seen).total_seconds() * 1000.0 <= CLICK_DEDUPE_WINDOW_MS:
                continue
            last_click[key] = now
        out.append(ev)

    flush()
    # A same-target click can overtake a still-pending input burst; restore
    # timestamp order (stable, so arrival order breaks ties).
    out.sort(key=lambda e: _parse_ts(e.timestamp))
    return out


def build_demo_events(raw_events: Iterable[RawEvent]) -> list[DemoEvent]:
    """Full ingest pipeline: filter noise, then debounce inputs."""
    kept = (filter_event(ev) for ev in raw_events)
    return debounce_inputs([ev for ev in kept if ev is not None])


@dataclass
class DemoLog:
    """An ordered demonstration log for one session."""

    session_id: str
    events: list[DemoEvent] = field(default_factory=list)

    def add(self, event: DemoEvent) -> None:
        # insort keeps timestamp order; equal timestamps keep arrival order
        insort_right(self.events, event, key=lambda e: _parse_ts(e.timestamp))

    def extend(self, events: Iterable[DemoEvent]) -> None:
        for ev in events:
            self.add(ev)


def load_demo_log(path: str | Path, session_id: str = "local") -> DemoLog:
    """Read a JSONL event file and run it through the ingest pipeline."""
    raw = read_events_jsonl(Path(path).read_text(encoding="utf-8"))
    log = DemoLog(session_id=session_id)
    log.extend(build_demo_events(raw))
    return log


def _describe(event: DemoEvent) -> str:
    t = event.target
    if event.kind == "click":
        return t.visible_text or f"<{t.tag}>"
    if event.kind == "text_select":
        return event.value or ""
    if event.kind == "text_input":
        desc = event.value or ""
        if t.input_name:
            desc += f" into '{t.input_name}'"
        return desc
    if event.kind == "form_submit":
        return t.visible_text or f"<{t.tag}>"
    if event.kind == "navigation":
        return event.page_url
    raise ValueError(f"unknown event kind {event.kind!r}")


def render_line(event: DemoEvent) -> str:
    # one line per event: embedded line breaks in values collapse to a space
    description = _LINE_BREAKS_RE.sub(" ", _describe(event))
    return f"[{event.timestamp}] {KIND_LABELS[event.kind]}: {description}"


def render_log(log: DemoLog) -> str:
    """Render a log to text, one line per event, byte-stable."""
    if not log.events:
        raise EmptyLogError(f"log {log.session_id!r} has no events")
    return "\n".join(render_line(ev) for ev in log.events)


def parse_log_line(line: str) -> tuple[str, str, str]:
    """Recover (timestamp, kind, description) from a rendered line."""
    m = _LOG_LINE_RE.match(line)
    if m is None:
        raise ValueError(f"not a rendered log line: {line!r}")
    timestamp, label, description = m.groups()
    return timestamp, LABEL_KINDS[label], description


def split_input_description(description: str) -> tuple[str, str | None]:
    """Split an Input description into (value, field name or None)."""
    m = _INPUT_FIELD_RE.match(description)
    if m is not None:
        return m.group(1), m.group(2)
    return description, None
