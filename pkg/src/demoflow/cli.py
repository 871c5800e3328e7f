"""Command line entry point for batch and CI use.

Subcommands print JSON to stdout (or --out files) and exit nonzero with
a structured error on failure: 1 validation, 2 generation, 3 execution,
4 I/O.
"""

from __future__ import annotations

import asyncio
import json
import sys
from pathlib import Path

import click

from .backends import MockLlmBackend, NetworkLlmBackend
from .capture import EmptyLogError, EventRejected, load_demo_log
from .config import Config, ConfigError, load_config
from .execution import (
    BundleError,
    DriverError,
    LlmNodeAgent,
    MockNodeAgent,
    PlanningError,
    Session,
    SessionStore,
    SimulatedDriver,
    execute,
    export_bundle,
    import_bundle,
    load_fixture_pages,
    plan,
    plan_to_dict,
)
from .execution.engine import execution_result_to_dict
from .gateway import LlmError, LlmGateway
from .generalization import GeneralizationError, adapt
from .generation import GenerationError, generate_workflow
from .model import SchemaError, canonical_json, validate, workflow_from_json

EXIT_VALIDATION = 1
EXIT_GENERATION = 2
EXIT_EXECUTION = 3
EXIT_IO = 4


def _bail(exit_code: int, code: str, message: str, stage: str) -> None:
    click.echo(json.dumps({"code": code, "message": message, "stage": stage}), err=True)
    sys.exit(exit_code)


def _emit(text: str, out: str | None, quiet: bool) -> None:
    if out is not None:
        try:
            Path(out).write_text(text, encoding="utf-8")
        except OSError as exc:
            _bail(EXIT_IO, "write_failed", f"cannot write {out}: {exc}", "io")
        if not quiet:
            click.echo(out)
    elif not quiet:
        click.echo(text, nl=not text.endswith("\n"))


def _load_settings(ctx: click.Context, **flags) -> Config:
    settings = dict(ctx.obj or {})
    try:
        return load_config(
            settings.get("config_path"),
            overrides={**settings.get("overrides", {}), **flags},
        )
    except ConfigError as exc:
        _bail(EXIT_IO, "bad_config", str(exc), "io")
        raise AssertionError("unreachable")


def _gateway(config: Config) -> LlmGateway:
    backend = (
        MockLlmBackend()
        if config.backend == "mock"
        else NetworkLlmBackend(config.backend_url, api_key=config.api_key or None)
    )
    return LlmGateway(backend)


def _read_workflow(path: str):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        _bail(EXIT_IO, "read_failed", f"cannot read {path}: {exc}", "io")
    try:
        return workflow_from_json(text)
    except (SchemaError, ValueError) as exc:
        _bail(EXIT_VALIDATION, "bad_workflow", f"{path}: {exc}", "validation")


def _load_pages(fixtures: str | None) -> dict:
    if fixtures is None:
        return {}
    path = Path(fixtures)
    try:
        if path.is_dir():
            pages = {}
            for found in sorted(path.glob("*.json")):
                pages.update(load_fixture_pages(found))
            return pages
        return load_fixture_pages(path)
    except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
        _bail(EXIT_IO, "bad_fixtures", f"cannot load fixtures from {fixtures}: {exc}", "io")
        raise AssertionError("unreachable")


@click.group()
@click.option("--config", "config_path", type=click.Path(), default=None, help="YAML config file.")
@click.option("--quiet", is_flag=True, default=False, help="Suppress stdout output.")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, quiet: bool) -> None:
    """Turn browser demonstrations into executable workflows."""
    ctx.obj = {"config_path": config_path, "overrides": {"quiet": quiet} if quiet else {}}


@main.command()
@click.option("--log", "log_path", required=True, type=click.Path(), help="Demonstration JSONL file.")
@click.option("--out", default=None, type=click.Path(), help="Write the workflow here.")
@click.option("--backend", default=None, type=click.Choice(["mock", "network"]))
@click.option("--model-id", default=None)
@click.pass_context
def generate(ctx, log_path: str, out: str | None, backend: str | None, model_id: str | None):
    """Generate a workflow from a demonstration log."""
    config = _load_settings(ctx, backend=backend, model_id=model_id)
    try:
        log = load_demo_log(log_path)
    except OSError as exc:
        _bail(EXIT_IO, "read_failed", f"cannot read {log_path}: {exc}", "io")
    except EventRejected as exc:
        _bail(EXIT_VALIDATION, "bad_event", str(exc), "validation")
    try:
        workflow = asyncio.run(generate_workflow(_gateway(config), log, config.model_id))
    except EmptyLogError as exc:
        _bail(EXIT_VALIDATION, "empty_log", str(exc), "validation")
    except (GenerationError, LlmError) as exc:
        _bail(EXIT_GENERATION, "generation_failed", str(exc), "generation")
    _emit(canonical_json(workflow), out, config.quiet)


@main.command("adapt")
@click.option("--workflow", "workflow_path", required=True, type=click.Path())
@click.option("--instruction", required=True)
@click.option("--out", default=None, type=click.Path())
@click.option("--backend", default=None, type=click.Choice(["mock", "network"]))
@click.option("--model-id", default=None)
@click.pass_context
def adapt_cmd(ctx, workflow_path: str, instruction: str, out: str | None, backend: str | None, model_id: str | None):
    """Adapt a workflow to a new instruction via placeholders."""
    config = _load_settings(ctx, backend=backend, model_id=model_id)
    if not instruction.strip():
        _bail(EXIT_VALIDATION, "missing_instruction", "instruction must not be empty", "validation")
    workflow = _read_workflow(workflow_path)
    try:
        adapted = asyncio.run(adapt(_gateway(config), workflow, instruction, config.model_id))
    except (GeneralizationError, LlmError) as exc:
        _bail(EXIT_GENERATION, "generalization_failed", str(exc), "generalization")
    _emit(canonical_json(adapted), out, config.quiet)


@main.command("plan")
@click.option("--workflow", "workflow_path", required=True, type=click.Path())
@click.pass_context
def plan_cmd(ctx, workflow_path: str):
    """Print the execution levels of a workflow as JSON."""
    config = _load_settings(ctx)
    workflow = _read_workflow(workflow_path)
    try:
        levels = plan_to_dict(plan(workflow))["levels"]
    except PlanningError as exc:
        _bail(EXIT_VALIDATION, "not_executable", str(exc), "validation")
    _emit(json.dumps(levels, separators=(",", ":")), None, config.quiet)


@main.command("execute")
@click.option("--workflow", "workflow_path", required=True, type=click.Path())
@click.option("--driver", "driver_kind", default=None, type=click.Choice(["simulated", "cdp"]))
@click.option("--fixtures", default=None, type=click.Path(), help="Page fixture file or directory.")
@click.option("--out", default=None, type=click.Path())
@click.option("--session", "session_id", default="cli")
@click.option("--backend", default=None, type=click.Choice(["mock", "network"]))
@click.pass_context
def execute_cmd(ctx, workflow_path, driver_kind, fixtures, out, session_id, backend):
    """Execute a workflow and print the result JSON."""
    config = _load_settings(ctx, driver=driver_kind, backend=backend)
    workflow = _read_workflow(workflow_path)
    report = validate(workflow)
    if not report.ok:
        _bail(EXIT_VALIDATION, "invalid_workflow", report.summary(), "validation")

    if config.driver == "cdp":
        from .execution.cdp import CdpDriver

        try:
            driver = CdpDriver(config.cdp_endpoint)
        except DriverError as exc:
            _bail(EXIT_EXECUTION, "driver_failed", str(exc), "execution")
    else:
        driver = SimulatedDriver(_load_pages(fixtures or (config.fixtures_path or None)))
    if config.backend == "mock":
        agent = MockNodeAgent()
    else:
        agent = LlmNodeAgent(_gateway(config), config.model_id)
    store = SessionStore(config.store_path or ":memory:")
    session = Session(session_id, store)
    try:
        result = asyncio.run(
            execute(
                workflow,
                driver,
                session,
                agent=agent,
                budget=config.action_budget,
                node_timeout_s=config.node_timeout_s,
            )
        )
    except PlanningError as exc:
        _bail(EXIT_VALIDATION, "not_executable", str(exc), "validation")
    except DriverError as exc:
        _bail(EXIT_EXECUTION, "driver_failed", str(exc), "execution")
    except Exception as exc:
        _bail(EXIT_EXECUTION, "execution_failed", str(exc), "execution")
    finally:
        store.close()
    _emit(json.dumps(execution_result_to_dict(result), indent=2, ensure_ascii=False) + "\n", out, config.quiet)


@main.command("export")
@click.option("--workflow", "workflow_path", required=True, type=click.Path())
@click.option("--out", "out", required=True, type=click.Path(), help="Bundle zip path.")
@click.pass_context
def export_cmd(ctx, workflow_path: str, out: str):
    """Export a workflow as a portable bundle."""
    config = _load_settings(ctx)
    workflow = _read_workflow(workflow_path)
    try:
        export_bundle(workflow, out)
    except PlanningError as exc:
        _bail(EXIT_VALIDATION, "not_executable", str(exc), "validation")
    except OSError as exc:
        _bail(EXIT_IO, "write_failed", f"cannot write {out}: {exc}", "io")
    if not config.quiet:
        click.echo(out)


@main.command("import")
@click.option("--bundle", "bundle_path", required=True, type=click.Path())
@click.option("--out", default=None, type=click.Path())
@click.pass_context
def import_cmd(ctx, bundle_path: str, out: str | None):
    """Import a bundle and print its workflow."""
    config = _load_settings(ctx)
    try:
        workflow = import_bundle(bundle_path)
    except FileNotFoundError as exc:
        _bail(EXIT_IO, "read_failed", str(exc), "io")
    except BundleError as exc:
        _bail(EXIT_IO, "bad_bundle", str(exc), "io")
    _emit(canonical_json(workflow), out, config.quiet)


@main.command("serve")
@click.option("--host", default=None)
@click.option("--port", default=None, type=int)
@click.pass_context
def serve_cmd(ctx, host: str | None, port: int | None):
    """Run the HTTP service."""
    import uvicorn

    from .service import create_app

    config = _load_settings(ctx, host=host, port=port)
    app = create_app(config)
    uvicorn.run(
        app,
        host=config.host,
        port=config.port,
        log_level="warning" if config.quiet else "info",
    )


if __name__ == "__main__":
    main()
