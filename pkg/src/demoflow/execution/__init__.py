"""Workflow execution: planning, drivers, node agents, the engine, bundles."""

from .agents import ActionBudgetExceeded, AgentError, LlmNodeAgent, MockNodeAgent, ToolGate, ToolPermissionError
from .bundle import BundleError, export_bundle, import_bundle, read_manifest
from .drivers import BrowserDriver, DriverError, DriverResult, SimulatedDriver, load_fixture_pages
from .engine import ExecutionEvent, ExecutionResult, execute, run_node
from .planner import ExecutionPlan, PlanningError, plan, plan_to_dict
from .session import ActionRecord, NodeResult, Session, SessionStore

__all__ = [
    "ActionBudgetExceeded",
    "ActionRecord",
    "AgentError",
    "BrowserDriver",
    "BundleError",
    "DriverError",
    "DriverResult",
    "ExecutionEvent",
    "ExecutionPlan",
    "ExecutionResult",
    "LlmNodeAgent",
    "MockNodeAgent",
    "NodeResult",
    "PlanningError",
    "Session",
    "SessionStore",
    "SimulatedDriver",
    "ToolGate",
    "ToolPermissionError",
    "execute",
    "export_bundle",
    "import_bundle",
    "load_fixture_pages",
    "plan",
    "plan_to_dict",
    "read_manifest",
    "run_node",
]
