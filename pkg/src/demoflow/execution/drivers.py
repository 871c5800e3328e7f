"""Browser driver contract and the in-process simulated environment.

Every driver capability maps 1:1 to one tool-vocabulary entry:
browser.open → open_tab, browser.click → click, browser.fill → fill,
browser.read → read_page, api.fetch → fetch. Operations never raise for
ordinary page-level failures; they report success explicitly so agents
can apply their own contingencies. DriverError is reserved for losing
the driver itself, which aborts the execution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

from ..backends import domain_of


class DriverError(Exception):
    """The driver connection is gone; execution cannot continue."""


@dataclass(frozen=True)
class DriverResult:
    ok: bool
    detail: str


class BrowserDriver(Protocol):
    async def open_tab(self, url: str) -> DriverResult: ...

    async def click(self, descriptor: str) -> DriverResult: ...

    async def fill(self, descriptor: str, value: str) -> DriverResult: ...

    async def read_page(self) -> DriverResult: ...

    async def fetch(self, url: str) -> DriverResult: ...


# ---------------------------------------------------------------------------
# Simulated environment.

@dataclass(frozen=True)
class PageTarget:
    descriptor: str
    kind: str  # "click" or "fill"
    effect_url: str = ""


@dataclass
class Page:
    text: str
    targets: list[PageTarget] = field(default_factory=list)


def load_fixture_pages(source: str | Path | dict) -> dict[str, Page]:
    """Parse the URL → {text, targets} fixture map from JSON or a dict."""
    if isinstance(source, dict):
        raw = source
    else:
        raw = json.loads(Path(source).read_text(encoding="utf-8"))
    pages: dict[str, Page] = {}
    for url, body in raw.items():
        targets = [
            PageTarget(t["descriptor"], t.get("kind", "click"), t.get("effect_url", ""))
            for t in body.get("targets", [])
        ]
        pages[url] = Page(text=body.get("text", ""), targets=targets)
    return pages


def _normalize(url: str) -> str:
    bare = url.split("://", 1)[-1]
    if bare.startswith("www."):
        bare = bare[4:]
    return bare.rstrip("/").lower()


class SimulatedDriver:
    """Fake web environment scripted by page fixtures.

    Tabs are keyed by domain: opening a URL on a new domain creates a new
    tab context, opening within a known domain reuses that tab. Clicks
    with an effect URL navigate the active tab.
    """

    def __init__(self, pages: dict[str, Page] | str | Path | dict):
        self.pages = pages if isinstance(pages, dict) and all(
            isinstance(v, Page) for v in pages.values()
        ) else load_fixture_pages(pages)
        self._by_norm = {_normalize(url): url for url in self.pages}
        self.tabs: dict[str, str] = {}  # domain → current url
        self.active_domain: str | None = None
        self.filled: dict[tuple[str, str], str] = {}  # (url, descriptor) → value
        self.calls: list[tuple[str, ...]] = []
        self.closed = False

    def _check_open(self) -> None:
        if self.closed:
            raise DriverError("simulated driver closed")

    def _resolve(self, url: str) -> str | None:
        return self._by_norm.get(_normalize(url))

    def _current_page(self) -> tuple[str, Page] | None:
        if self.active_domain is None:
            return None
        url = self.tabs[self.active_domain]
        page = self.pages.get(url)
        return None if page is None else (url, page)

    def _find_target(self, page: Page, descriptor: str, kind: str) -> PageTarget | None:
        wanted = descriptor.strip().lower()
        candidates = [t for t in page.targets if t.kind == kind]
        for target in candidates:
            if target.descriptor.lower() == wanted:
                return target
        for target in candidates:
            have = target.descriptor.lower()
            if wanted in have or have in wanted:
                return target
        return None

    async def open_tab(self, url: str) -> DriverResult:
        self._check_open()
        self.calls.append(("open_tab", url))
        resolved = self._resolve(url)
        if resolved is None:
            return DriverResult(False, f"no page at {url}")
        domain = domain_of(resolved)
        new_tab = domain not in self.tabs
        self.tabs[domain] = resolved
        self.active_domain = domain
        note = "new tab" if new_tab else "existing tab"
        return DriverResult(True, f"opened {resolved} in {note}")

    async def click(self, descriptor: str) -> DriverResult:
        self._check_open()
        self.calls.append(("click", descriptor))
        current = self._current_page()
        if current is None:
            return DriverResult(False, "no page is open")
        url, page = current
        target = self._find_target(page, descriptor, "click")
        if target is None:
            return DriverResult(False, f"no clickable element {descriptor!r} on {url}")
        if target.effect_url:
            resolved = self._resolve(target.effect_url)
            if resolved is None:
                return DriverResult(False, f"click led to missing page {target.effect_url}")
            self.tabs[self.active_domain] = resolved
            return DriverResult(True, f"clicked {target.descriptor!r}, now at {resolved}")
        return DriverResult(True, f"clicked {target.descriptor!r}")

    async def fill(self, descriptor: str, value: str) -> DriverResult:
        self._check_open()
        self.calls.append(("fill", descriptor, value))
        current = self._current_page()
        if current is None:
            return DriverResult(False, "no page is open")
        url, page = current
        target = self._find_target(page, descriptor, "fill")
        if target is None:
            return DriverResult(False, f"no fillable field {descriptor!r} on {url}")
        self.filled[(url, target.descriptor)] = value
        return DriverResult(True, f"filled {target.descriptor!r} with {value!r}")

    async def read_page(self) -> DriverResult:
        self._check_open()
        self.calls.append(("read_page",))
        current = self._current_page()
        if current is None:
            return DriverResult(False, "no page is open")
        _, page = current
        return DriverResult(True, page.text)

    async def fetch(self, url: str) -> DriverResult:
        self._check_open()
        self.calls.append(("fetch", url))
        resolved = self._resolve(url)
        if resolved is None:
            return DriverResult(False, f"no resource at {url}")
        return DriverResult(True, self.pages[resolved].text)

    def close(self) -> None:
        self.closed = True
