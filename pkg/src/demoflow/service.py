"""HTTP facade over the whole pipeline.

One service process hosts many demonstration sessions. Each session
owns a phase (recording, reviewing, executing, idle), a versioned
workflow, an event log, and an SSE feed pushing workflow diffs, node
statuses, phase changes, and final results to the client.

Edits use optimistic versioning: the client sends the version it
edited, a mismatch yields 409 and the client re-syncs. Events arriving
outside the recording phase are buffered and only feed regeneration
once recording resumes.
"""

from __future__ import annotations

import asyncio
import json
import logging
import time
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field

from fastapi import Body, FastAPI, Header, Request
from fastapi.exceptions import HTTPException
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from .backends import MockLlmBackend, NetworkLlmBackend
from .capture import DemoLog, EventRejected, RawEvent, build_demo_events, read_events_jsonl
from .config import Config
from .execution import (
    LlmNodeAgent,
    MockNodeAgent,
    NodeResult,
    Session,
    SessionStore,
    SimulatedDriver,
    execute,
    load_fixture_pages,
)
from .execution.engine import ExecutionResult, execution_result_to_dict
from .execution.session import result_to_dict
from .gateway import LlmError, LlmGateway
from .generalization import GeneralizationError, adapt, instantiate
from .generation import GenerationError, empty_workflow, regenerate
from .model import (
    EditError,
    MalformedEditError,
    RejectedEditError,
    SchemaError,
    UnknownNodeError,
    Workflow,
    apply_edit,
    diff,
    edit_from_dict,
    edit_to_dict,
    workflow_from_dict,
    workflow_to_dict,
)
from .store import TemplateStore, record_to_dict

logger = logging.getLogger(__name__)

PHASES = ("recording", "reviewing", "executing", "idle")

# recording→reviewing→(executing|recording)→…; executing ends server-side.
_PHASE_TRANSITIONS = {
    "recording": {"reviewing", "idle"},
    "reviewing": {"recording", "executing", "idle"},
    "executing": {"reviewing", "idle"},
    "idle": {"recording", "reviewing"},
}


def _fail(status: int, code: str, message: str, stage: str, **extra) -> HTTPException:
    return HTTPException(status, {"code": code, "message": message, "stage": stage, **extra})


@dataclass
class SessionRuntime:
    session_id: str
    phase: str = "recording"
    version: int = 0
    workflow: Workflow = field(default_factory=empty_workflow)
    raw_events: list[RawEvent] = field(default_factory=list)
    buffered_raw: list[RawEvent] = field(default_factory=list)
    last_regen_at: float = float("-inf")
    regen_task: asyncio.Task | None = None
    execution_task: asyncio.Task | None = None
    running_execution: str | None = None
    executions: dict[str, dict] = field(default_factory=dict)
    subscribers: list[asyncio.Queue] = field(default_factory=list)
    lock: asyncio.Lock = field(default_factory=asyncio.Lock)

    def broadcast(self, name: str, payload: dict) -> None:
        for queue in list(self.subscribers):
            queue.put_nowait((name, payload))

    def set_phase(self, phase: str) -> None:
        if phase != self.phase:
            self.phase = phase
            self.broadcast("phase", {"phase": phase, "version": self.version})


class Service:
    """Shared state behind the FastAPI app."""

    def __init__(
        self,
        config: Config,
        *,
        backend=None,
        node_agent=None,
        pages: dict | None = None,
    ):
        self.config = config
        if backend is None:
            backend = (
                MockLlmBackend()
                if config.backend == "mock"
                else NetworkLlmBackend(config.backend_url, api_key=config.api_key or None)
            )
        self.gateway = LlmGateway(backend)
        if node_agent is None:
            node_agent = (
                MockNodeAgent()
                if config.backend == "mock"
                else LlmNodeAgent(self.gateway, config.model_id)
            )
        self.node_agent = node_agent
        store_path = config.store_path or ":memory:"
        self.session_store = SessionStore(store_path)
        self.template_store = TemplateStore(store_path)
        if pages is None and config.fixtures_path:
            pages = {
                url: page for url, page in load_fixture_pages(config.fixtures_path).items()
            }
        self.pages = pages or {}
        self.sessions: dict[str, SessionRuntime] = {}

    # -- lookups -----------------------------------------------------------

    def runtime(self, session_id: str) -> SessionRuntime:
        runtime = self.sessions.get(session_id)
        if runtime is None:
            raise _fail(404, "unknown_session", f"no session {session_id!r}", "service")
        return runtime

    def new_session(self, workflow: Workflow | None = None, phase: str = "recording") -> SessionRuntime:
        runtime = SessionRuntime(session_id=uuid.uuid4().hex, phase=phase)
        if workflow is not None:
            runtime.workflow = workflow
            runtime.version = 1
        self.sessions[runtime.session_id] = runtime
        return runtime

    def make_driver(self, pages_override: dict | None):
        if self.config.driver == "cdp" and pages_override is None:
            from .execution.cdp import CdpDriver

            return CdpDriver(self.config.cdp_endpoint)
        return SimulatedDriver(pages_override if pages_override is not None else self.pages)

    # -- regeneration ------------------------------------------------------

    def demo_log(self, runtime: SessionRuntime) -> DemoLog:
        log = DemoLog(session_id=runtime.session_id)
        log.extend(build_demo_events(runtime.raw_events))
        return log

    async def regenerate_now(self, runtime: SessionRuntime) -> bool:
        """Regenerate under the session lock; returns True when changed."""
        async with runtime.lock:
            runtime.last_regen_at = time.monotonic()
            log = self.demo_log(runtime)
            if not log.events:
                return False
            try:
                workflow, edits = await regenerate(
                    self.gateway, log, runtime.workflow, self.config.model_id
                )
            except (GenerationError, LlmError) as exc:
                logger.warning("session %s: regeneration failed: %s", runtime.session_id, exc)
                return False
            if not edits:
                return False
            runtime.workflow = workflow
            runtime.version += 1
            runtime.broadcast(
                "workflow_diff",
                {"version": runtime.version, "edits": [edit_to_dict(e) for e in edits]},
            )
            return True

    def kick_regeneration(self, runtime: SessionRuntime) -> float:
        """Schedule a throttled regeneration; returns the delay used."""
        if runtime.regen_task is not None and not runtime.regen_task.done():
            return -1.0
        delay = max(0.0, self.config.regen_throttle_s - (time.monotonic() - runtime.last_regen_at))

        async def later() -> None:
            if delay:
                await asyncio.sleep(delay)
            await self.regenerate_now(runtime)

        runtime.regen_task = asyncio.create_task(later())
        return delay

    async def close(self) -> None:
        pending = [
            task
            for runtime in self.sessions.values()
            for task in (runtime.regen_task, runtime.execution_task)
            if task is not None and not task.done()
        ]
        for task in pending:
            task.cancel()
        if pending:
            await asyncio.gather(*pending, return_exceptions=True)
        self.session_store.close()
        self.template_store.close()


def _workflow_body(runtime: SessionRuntime) -> dict:
    return {
        "session_id": runtime.session_id,
        "phase": runtime.phase,
        "version": runtime.version,
        "workflow": workflow_to_dict(runtime.workflow),
    }


def create_app(
    config: Config | None = None,
    *,
    backend=None,
    node_agent=None,
    pages: dict | None = None,
) -> FastAPI:
    service = Service(
        config or Config(), backend=backend, node_agent=node_agent, pages=pages
    )

    @asynccontextmanager
    async def lifespan(_: FastAPI):
        yield
        await service.close()

    app = FastAPI(title="demoflow", lifespan=lifespan)
    app.state.service = service

    # The workflow panel is a static page served from wherever, so the API
    # must answer cross-origin requests.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(HTTPException)
    async def structured_errors(_: Request, exc: HTTPException):
        detail = exc.detail
        if not isinstance(detail, dict):
            detail = {"code": "error", "message": str(detail), "stage": "service"}
        return JSONResponse(status_code=exc.status_code, content=detail)

    # -- sessions ----------------------------------------------------------

    @app.post("/sessions", status_code=201)
    async def create_session():
        runtime = service.new_session()
        return {"session_id": runtime.session_id, "phase": runtime.phase, "version": runtime.version}

    @app.post("/sessions/{session_id}/events")
    async def ingest_events(session_id: str, request: Request):
        runtime = service.runtime(session_id)
        text = (await request.body()).decode("utf-8")
        try:
            events = read_events_jsonl(text)
        except EventRejected as exc:
            raise _fail(422, "bad_event", str(exc), "capture")
        recording = runtime.phase == "recording"
        if recording:
            runtime.raw_events.extend(events)
            if events:
                service.kick_regeneration(runtime)
        else:
            runtime.buffered_raw.extend(events)
        return {
            "accepted": len(events),
            "buffered": not recording,
            "phase": runtime.phase,
            "version": runtime.version,
        }

    @app.get("/sessions/{session_id}/workflow")
    async def get_workflow(session_id: str):
        return _workflow_body(service.runtime(session_id))

    @app.put("/sessions/{session_id}/workflow")
    async def put_edit(
        session_id: str,
        payload: dict = Body(...),
        x_expected_version: int | None = Header(default=None),
    ):
        runtime = service.runtime(session_id)
        expected = x_expected_version
        if expected is None:
            expected = payload.get("expected_version")
        if expected is None:
            raise _fail(
                400, "missing_version", "provide X-Expected-Version or expected_version", "editing"
            )
        async with runtime.lock:
            if int(expected) != runtime.version:
                raise _fail(
                    409,
                    "version_conflict",
                    f"expected version {expected}, server is at {runtime.version}",
                    "editing",
                )
            try:
                edit = edit_from_dict(payload.get("edit"))
                runtime.workflow = apply_edit(runtime.workflow, edit)
            except MalformedEditError as exc:
                raise _fail(422, "malformed_edit", str(exc), "editing")
            except UnknownNodeError as exc:
                raise _fail(422, "unknown_node", str(exc), "editing")
            except RejectedEditError as exc:
                raise _fail(
                    422,
                    "rejected_edit",
                    str(exc),
                    "editing",
                    report={
                        "errors": [
                            {"code": v.code, "nodes": list(v.nodes), "message": v.message}
                            for v in exc.report.errors
                        ],
                        "warnings": [
                            {"code": v.code, "nodes": list(v.nodes), "message": v.message}
                            for v in exc.report.warnings
                        ],
                    },
                )
            except EditError as exc:
                raise _fail(422, "bad_edit", str(exc), "editing")
            runtime.version += 1
            runtime.broadcast(
                "workflow_diff",
                {"version": runtime.version, "edits": [edit_to_dict(edit)]},
            )
            return _workflow_body(runtime)

    @app.post("/sessions/{session_id}/phase")
    async def set_phase(session_id: str, payload: dict = Body(...)):
        runtime = service.runtime(session_id)
        target = payload.get("phase")
        if target not in PHASES:
            raise _fail(422, "unknown_phase", f"phase must be one of {list(PHASES)}", "service")
        if target == "executing":
            raise _fail(422, "not_settable", "start executions via POST /execute", "service")
        if runtime.running_execution is not None:
            raise _fail(409, "execution_running", "phase is locked while executing", "service")
        if target != runtime.phase and target not in _PHASE_TRANSITIONS[runtime.phase]:
            raise _fail(
                422,
                "bad_transition",
                f"cannot move from {runtime.phase!r} to {target!r}",
                "service",
            )
        resumed_recording = target == "recording" and runtime.phase != "recording"
        runtime.set_phase(target)
        if resumed_recording and runtime.buffered_raw:
            runtime.raw_events.extend(runtime.buffered_raw)
            runtime.buffered_raw.clear()
            service.kick_regeneration(runtime)
        return {"session_id": session_id, "phase": runtime.phase, "version": runtime.version}

    # -- generalization ----------------------------------------------------

    @app.post("/sessions/{session_id}/adapt")
    async def adapt_session(session_id: str, payload: dict = Body(...)):
        runtime = service.runtime(session_id)
        instruction = payload.get("instruction", "")
        if not isinstance(instruction, str) or not instruction.strip():
            raise _fail(422, "missing_instruction", "body must carry a non-empty instruction", "generalization")
        if not runtime.workflow.nodes:
            raise _fail(422, "empty_workflow", "nothing to adapt yet", "generalization")
        async with runtime.lock:
            before = runtime.workflow
            try:
                adapted = await adapt(service.gateway, before, instruction, service.config.model_id)
            except GeneralizationError as exc:
                raise _fail(502, "generalization_failed", str(exc), exc.stage)
            except LlmError as exc:
                raise _fail(502, "backend_failed", str(exc), "generalization")
            runtime.workflow = adapted
            runtime.version += 1
            edits = diff(before, adapted)
            runtime.broadcast(
                "workflow_diff",
                {"version": runtime.version, "edits": [edit_to_dict(e) for e in edits]},
            )
            body = _workflow_body(runtime)
            body["fill_notes"] = workflow_to_dict(adapted).get("fill_notes", [])
            return body

    # -- execution ---------------------------------------------------------

    @app.post("/sessions/{session_id}/execute", status_code=202)
    async def start_execution(session_id: str, payload: dict | None = Body(default=None)):
        runtime = service.runtime(session_id)
        if runtime.running_execution is not None:
            raise _fail(
                409,
                "execution_running",
                f"execution {runtime.running_execution} is still running",
                "execution",
            )
        if not runtime.workflow.nodes:
            raise _fail(422, "empty_workflow", "nothing to execute yet", "execution")
        pages_override = (payload or {}).get("pages")
        try:
            driver = service.make_driver(pages_override)
        except Exception as exc:
            raise _fail(502, "driver_unavailable", str(exc), "execution")
        execution_id = uuid.uuid4().hex
        workflow = runtime.workflow
        entry = {
            "status": "running",
            "workflow_version": runtime.version,
            "result": None,
            "error": None,
        }
        runtime.executions[execution_id] = entry
        runtime.running_execution = execution_id
        runtime.set_phase("executing")

        async def run() -> None:
            store_session = Session(runtime.session_id, service.session_store)
            try:
                result = await execute(
                    workflow,
                    driver,
                    store_session,
                    agent=service.node_agent,
                    execution_id=execution_id,
                    budget=service.config.action_budget,
                    node_timeout_s=service.config.node_timeout_s,
                    observer=lambda ev: runtime.broadcast(ev.kind, ev.payload),
                )
                entry["status"] = "succeeded"
                entry["result"] = result
            except Exception as exc:
                entry["status"] = "failed"
                entry["error"] = str(exc)
                runtime.broadcast(
                    "final_result", {"execution_id": execution_id, "error": str(exc)}
                )
            finally:
                runtime.running_execution = None
                runtime.set_phase("reviewing")

        runtime.execution_task = asyncio.create_task(run())
        return {"execution_id": execution_id, "phase": runtime.phase}

    @app.get("/sessions/{session_id}/executions/{execution_id}")
    async def get_execution(session_id: str, execution_id: str):
        runtime = service.runtime(session_id)
        entry = runtime.executions.get(execution_id)
        if entry is None:
            raise _fail(404, "unknown_execution", f"no execution {execution_id!r}", "execution")
        if entry["result"] is not None:
            result: ExecutionResult = entry["result"]
            body = execution_result_to_dict(result)
        else:
            partial: dict[str, NodeResult] = service.session_store.results_map(
                session_id, execution_id
            )
            body = {
                "execution_id": execution_id,
                "results": {
                    name: result_to_dict(res) for name, res in sorted(partial.items())
                },
            }
            if entry["error"] is not None:
                body["error"] = entry["error"]
        body["status"] = entry["status"]
        body["workflow_version"] = entry["workflow_version"]
        return body

    # -- live updates ------------------------------------------------------

    @app.get("/sessions/{session_id}/stream")
    async def stream(session_id: str):
        runtime = service.runtime(session_id)

        async def feed():
            queue: asyncio.Queue = asyncio.Queue()
            runtime.subscribers.append(queue)
            try:
                yield _sse("phase", {"phase": runtime.phase, "version": runtime.version})
                while True:
                    name, payload = await queue.get()
                    yield _sse(name, payload)
            finally:
                runtime.subscribers.remove(queue)

        return StreamingResponse(feed(), media_type="text/event-stream")

    # -- templates ---------------------------------------------------------

    @app.post("/templates", status_code=201)
    async def save_template(payload: dict = Body(...)):
        name = payload.get("name", "")
        lineage = payload.get("lineage", "")
        if "workflow" in payload:
            try:
                workflow = workflow_from_dict(payload["workflow"])
            except SchemaError as exc:
                raise _fail(422, "bad_workflow", str(exc), "templates")
        elif "session_id" in payload:
            workflow = service.runtime(payload["session_id"]).workflow
        else:
            raise _fail(422, "missing_workflow", "provide workflow or session_id", "templates")
        try:
            record = service.template_store.save(name, workflow, lineage)
        except ValueError as exc:
            raise _fail(422, "bad_template", str(exc), "templates")
        return record_to_dict(record, include_workflow=False)

    @app.get("/templates")
    async def list_templates():
        return {
            "templates": [
                record_to_dict(r, include_workflow=False) for r in service.template_store.list()
            ]
        }

    @app.get("/templates/{template_id}")
    async def get_template(template_id: str):
        record = service.template_store.get(template_id)
        if record is None:
            raise _fail(404, "unknown_template", f"no template {template_id!r}", "templates")
        return record_to_dict(record)

    @app.post("/templates/{template_id}/instantiate", status_code=201)
    async def instantiate_template(template_id: str, payload: dict | None = Body(default=None)):
        record = service.template_store.get(template_id)
        if record is None:
            raise _fail(404, "unknown_template", f"no template {template_id!r}", "templates")
        workflow = record.workflow()
        instruction = (payload or {}).get("instruction", "")
        if instruction:
            try:
                if workflow.semantic_variables:
                    workflow = await instantiate(
                        service.gateway, workflow, instruction, model_id=service.config.model_id
                    )
                else:
                    workflow = await adapt(
                        service.gateway, workflow, instruction, service.config.model_id
                    )
            except GeneralizationError as exc:
                raise _fail(502, "generalization_failed", str(exc), exc.stage)
            except LlmError as exc:
                raise _fail(502, "backend_failed", str(exc), "generalization")
        runtime = service.new_session(workflow, phase="reviewing")
        body = _workflow_body(runtime)
        body["template_id"] = template_id
        return body

    return app


def _sse(name: str, payload: dict) -> str:
    return f"event: {name}\ndata: {json.dumps(payload, ensure_ascii=False)}\n\n"
