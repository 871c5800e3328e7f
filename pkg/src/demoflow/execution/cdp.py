"""Chrome DevTools Protocol driver over a minimal WebSocket client.

The client implements just enough of RFC 6455 for a CDP session: the
opening handshake, masked client frames, text/ping/close handling, and
fragmented messages. Element targeting runs as injected JavaScript with
the same matching rules as the simulated driver: exact case-insensitive
descriptor match first, then bidirectional substring.
"""

from __future__ import annotations

import asyncio
import base64
import hashlib
import json
import os
import struct
from urllib.parse import urlsplit

from ..backends import domain_of
from .drivers import DriverError, DriverResult

_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

_OP_CONT = 0x0
_OP_TEXT = 0x1
_OP_CLOSE = 0x8
_OP_PING = 0x9
_OP_PONG = 0xA


def _accept_key(key: str) -> str:
    digest = hashlib.sha1((key + _WS_GUID).encode("ascii")).digest()
    return base64.b64encode(digest).decode("ascii")


def _encode_frame(opcode: int, payload: bytes, *, masked: bool) -> bytes:
    head = bytearray([0x80 | opcode])
    length = len(payload)
    mask_bit = 0x80 if masked else 0
    if length < 126:
        head.append(mask_bit | length)
    elif length < 1 << 16:
        head.append(mask_bit | 126)
        head += struct.pack(">H", length)
    else:
        head.append(mask_bit | 127)
        head += struct.pack(">Q", length)
    if not masked:
        return bytes(head) + payload
    mask = os.urandom(4)
    body = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
    return bytes(head) + mask + body


class _WebSocket:
    """Client half of a WebSocket connection, text frames only."""

    def __init__(self, reader: asyncio.StreamReader, writer: asyncio.StreamWriter):
        self._reader = reader
        self._writer = writer

    @classmethod
    async def connect(cls, url: str, *, timeout_s: float) -> "_WebSocket":
        parts = urlsplit(url)
        host, port = parts.hostname, parts.port or 80
        path = parts.path or "/"
        if parts.query:
            path += "?" + parts.query
        try:
            reader, writer = await asyncio.wait_for(
                asyncio.open_connection(host, port), timeout=timeout_s
            )
        except (OSError, asyncio.TimeoutError) as exc:
            raise DriverError(f"cannot reach {url}: {exc}") from exc

        key = base64.b64encode(os.urandom(16)).decode("ascii")
        request = (
            f"GET {path} HTTP/1.1\r\n"
            f"Host: {host}:{port}\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Key: {key}\r\n"
            "Sec-WebSocket-Version: 13\r\n"
            "\r\n"
        )
        writer.write(request.encode("ascii"))
        await writer.drain()

        try:
            raw = await asyncio.wait_for(reader.readuntil(b"\r\n\r\n"), timeout=timeout_s)
        except (asyncio.IncompleteReadError, asyncio.TimeoutError, OSError) as exc:
            writer.close()
            raise DriverError(f"handshake with {url} failed: {exc}") from exc
        status, _, rest = raw.decode("latin-1").partition("\r\n")
        if " 101 " not in status + " ":
            writer.close()
            raise DriverError(f"handshake with {url} rejected: {status.strip()}")
        headers = {}
        for line in rest.split("\r\n"):
            name, _, value = line.partition(":")
            headers[name.strip().lower()] = value.strip()
        if headers.get("sec-websocket-accept") != _accept_key(key):
            writer.close()
            raise DriverError(f"handshake with {url} returned a bad accept key")
        return cls(reader, writer)

    async def send_text(self, text: str) -> None:
        try:
            self._writer.write(_encode_frame(_OP_TEXT, text.encode("utf-8"), masked=True))
            await self._writer.drain()
        except (ConnectionError, OSError) as exc:
            raise DriverError(f"connection lost: {exc}") from exc

    async def _read_frame(self) -> tuple[int, bool, bytes]:
        head = await self._reader.readexactly(2)
        fin = bool(head[0] & 0x80)
        opcode = head[0] & 0x0F
        masked = bool(head[1] & 0x80)
        length = head[1] & 0x7F
        if length == 126:
            (length,) = struct.unpack(">H", await self._reader.readexactly(2))
        elif length == 127:
            (length,) = struct.unpack(">Q", await self._reader.readexactly(8))
        mask = await self._reader.readexactly(4) if masked else b""
        payload = await self._reader.readexactly(length) if length else b""
        if mask:
            payload = bytes(b ^ mask[i % 4] for i, b in enumerate(payload))
        return opcode, fin, payload

    async def recv_text(self) -> str:
        """Next complete text message; replies to pings along the way."""
        parts: list[bytes] = []
        try:
            while True:
                opcode, fin, payload = await self._read_frame()
                if opcode == _OP_PING:
                    self._writer.write(_encode_frame(_OP_PONG, payload, masked=True))
                    await self._writer.drain()
                elif opcode == _OP_PONG:
                    continue
                elif opcode == _OP_CLOSE:
                    self._writer.write(_encode_frame(_OP_CLOSE, b"", masked=True))
                    await self._writer.drain()
                    self._writer.close()
                    raise DriverError("connection closed by the browser")
                elif opcode in (_OP_TEXT, _OP_CONT):
                    parts.append(payload)
                    if fin:
                        return b"".join(parts).decode("utf-8")
                else:
                    raise DriverError(f"unsupported frame opcode {opcode}")
        except (asyncio.IncompleteReadError, ConnectionError, OSError) as exc:
            raise DriverError(f"connection lost: {exc}") from exc

    def close_nowait(self) -> None:
        try:
            self._writer.write(_encode_frame(_OP_CLOSE, b"", masked=True))
            self._writer.close()
        except (ConnectionError, OSError):
            pass


# JavaScript injected via Runtime.evaluate. Both snippets resolve their
# target with exact case-insensitive matching first, substring second,
# and return the matched label ("" for a miss).
_CLICK_JS = """
(() => {
  const wanted = %s.trim().toLowerCase();
  const label = el => ((el.innerText || el.value || el.getAttribute('aria-label') || el.name || '') + '').trim();
  const els = Array.from(document.querySelectorAll(
    "a, button, input[type=submit], input[type=button], [role=button], [onclick]"));
  let hit = els.find(el => label(el).toLowerCase() === wanted);
  if (!hit) hit = els.find(el => {
    const t = label(el).toLowerCase();
    return t && (t.includes(wanted) || wanted.includes(t));
  });
  if (!hit) return "";
  hit.click();
  return label(hit) || hit.tagName.toLowerCase();
})()
"""

_FILL_JS = """
(() => {
  const wanted = %s.trim().toLowerCase();
  const value = %s;
  const labels = el => {
    const attached = el.labels && el.labels[0] ? el.labels[0].innerText : "";
    return [el.placeholder, el.name, el.id, el.getAttribute('aria-label'), attached]
      .map(x => (x || "").trim()).filter(Boolean);
  };
  const els = Array.from(document.querySelectorAll("input, textarea, select"));
  const find = exact => els.find(el => labels(el).some(t => {
    const low = t.toLowerCase();
    return exact ? low === wanted : (low.includes(wanted) || wanted.includes(low));
  }));
  const hit = find(true) || find(false);
  if (!hit) return "";
  hit.value = value;
  hit.dispatchEvent(new Event('input', {bubbles: true}));
  hit.dispatchEvent(new Event('change', {bubbles: true}));
  return labels(hit)[0] || hit.tagName.toLowerCase();
})()
"""

_READ_JS = "document.body ? document.body.innerText : ''"

_FETCH_JS = "fetch(%s).then(r => r.text())"


class CdpDriver:
    """Drives a real browser through its DevTools WebSocket endpoint.

    Tabs are keyed by domain to mirror the simulated driver: opening a
    URL on a new domain creates and attaches a target, opening within a
    known domain navigates the existing one.
    """

    def __init__(self, endpoint: str, *, timeout_s: float = 30.0):
        if not endpoint.startswith("ws://"):
            raise DriverError(f"need a ws:// DevTools endpoint, got {endpoint!r}")
        self.endpoint = endpoint
        self.timeout_s = timeout_s
        self._ws: _WebSocket | None = None
        self._next_id = 1
        self._tabs: dict[str, str] = {}  # domain → CDP session id
        self._active: str | None = None
        self.closed = False

    # -- plumbing ----------------------------------------------------------

    async def _socket(self) -> _WebSocket:
        if self.closed:
            raise DriverError("driver closed")
        if self._ws is None:
            self._ws = await _WebSocket.connect(self.endpoint, timeout_s=self.timeout_s)
        return self._ws

    async def _command(self, method: str, params: dict, *, session_id: str | None = None) -> dict:
        ws = await self._socket()
        call_id = self._next_id
        self._next_id += 1
        message: dict = {"id": call_id, "method": method, "params": params}
        if session_id is not None:
            message["sessionId"] = session_id
        await ws.send_text(json.dumps(message))
        while True:
            try:
                reply = json.loads(
                    await asyncio.wait_for(ws.recv_text(), timeout=self.timeout_s)
                )
            except asyncio.TimeoutError as exc:
                raise DriverError(f"no reply to {method} within {self.timeout_s:g}s") from exc
            if reply.get("id") != call_id:
                continue  # event or stale reply
            if "error" in reply:
                raise _CdpCommandError(reply["error"].get("message", "command failed"))
            return reply.get("result", {})

    async def _evaluate(self, expression: str, *, await_promise: bool = False) -> tuple[bool, str]:
        """Run JS in the active tab; (False, reason) for page-level failures."""
        if self._active is None:
            return False, "no open page"
        try:
            result = await self._command(
                "Runtime.evaluate",
                {
                    "expression": expression,
                    "returnByValue": True,
                    "awaitPromise": await_promise,
                },
                session_id=self._tabs[self._active],
            )
        except _CdpCommandError as exc:
            return False, str(exc)
        if "exceptionDetails" in result:
            detail = result["exceptionDetails"].get("text", "evaluation failed")
            return False, detail
        return True, str(result.get("result", {}).get("value", ""))

    # -- driver contract ---------------------------------------------------

    async def open_tab(self, url: str) -> DriverResult:
        domain = domain_of(url)
        if domain in self._tabs:
            self._active = domain
            try:
                await self._command(
                    "Page.navigate", {"url": url}, session_id=self._tabs[domain]
                )
            except _CdpCommandError as exc:
                return DriverResult(False, f"cannot open {url}: {exc}")
            return DriverResult(True, f"now at {url} (existing tab)")
        try:
            created = await self._command("Target.createTarget", {"url": url})
            attached = await self._command(
                "Target.attachToTarget",
                {"targetId": created["targetId"], "flatten": True},
            )
        except _CdpCommandError as exc:
            return DriverResult(False, f"cannot open {url}: {exc}")
        self._tabs[domain] = attached["sessionId"]
        self._active = domain
        return DriverResult(True, f"now at {url} (new tab)")

    async def click(self, descriptor: str) -> DriverResult:
        ok, value = await self._evaluate(_CLICK_JS % json.dumps(descriptor))
        if not ok:
            return DriverResult(False, value)
        if not value:
            return DriverResult(False, f"no clickable element matching {descriptor!r}")
        return DriverResult(True, f"clicked {value!r}")

    async def fill(self, descriptor: str, value: str) -> DriverResult:
        ok, label = await self._evaluate(
            _FILL_JS % (json.dumps(descriptor), json.dumps(value))
        )
        if not ok:
            return DriverResult(False, label)
        if not label:
            return DriverResult(False, f"no fillable field matching {descriptor!r}")
        return DriverResult(True, f"filled {label!r} with {value!r}")

    async def read_page(self) -> DriverResult:
        ok, text = await self._evaluate(_READ_JS)
        return DriverResult(ok, text)

    async def fetch(self, url: str) -> DriverResult:
        ok, body = await self._evaluate(_FETCH_JS % json.dumps(url), await_promise=True)
        if not ok:
            return DriverResult(False, f"fetch {url} failed: {body}")
        return DriverResult(True, body)

    def close(self) -> None:
        self.closed = True
        if self._ws is not None:
            self._ws.close_nowait()
            self._ws = None


class _CdpCommandError(Exception):
    """A CDP command was answered with an error; page-level, not fatal."""
