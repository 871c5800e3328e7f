"""CLI surface: subcommand output shapes, exit codes, byte-stable files."""

from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from demoflow.cli import main
from demoflow.model import canonical_json, workflow_from_json

FIXTURES = Path(__file__).parent / "fixtures"
DEMO_LOG = str(FIXTURES / "kayak_demo.jsonl")
SIM_PAGES = str(FIXTURES / "sim_kayak.json")


@pytest.fixture
def runner():
    return CliRunner()


def run(runner, *args, **kwargs):
    return runner.invoke(main, list(args), catch_exceptions=False, **kwargs)


def generate_to(runner, path: Path) -> None:
    result = run(runner, "generate", "--log", DEMO_LOG, "--out", str(path))
    assert result.exit_code == 0, result.output + result.stderr


def stderr_payload(result) -> dict:
    payload = json.loads(result.stderr.strip().splitlines()[-1])
    assert set(payload) == {"code", "message", "stage"}
    return payload


class TestGenerate:
    def test_stdout_is_canonical_workflow_json(self, runner):
        result = run(runner, "generate", "--log", DEMO_LOG)
        assert result.exit_code == 0
        w = workflow_from_json(result.output)
        assert result.output == canonical_json(w)

    def test_repeat_runs_are_byte_identical(self, runner, tmp_path):
        generate_to(runner, tmp_path / "one.json")
        generate_to(runner, tmp_path / "two.json")
        assert (tmp_path / "one.json").read_bytes() == (tmp_path / "two.json").read_bytes()

    def test_out_prints_path_not_workflow(self, runner, tmp_path):
        out = tmp_path / "w.json"
        result = run(runner, "generate", "--log", DEMO_LOG, "--out", str(out))
        assert result.output.strip() == str(out)

    def test_quiet_silences_stdout(self, runner, tmp_path):
        out = tmp_path / "w.json"
        result = run(runner, "--quiet", "generate", "--log", DEMO_LOG, "--out", str(out))
        assert result.exit_code == 0
        assert result.output == ""
        assert out.exists()

    def test_missing_log_exits_4(self, runner, tmp_path):
        result = run(runner, "generate", "--log", str(tmp_path / "absent.jsonl"))
        assert result.exit_code == 4
        assert stderr_payload(result)["code"] == "read_failed"

    def test_empty_log_exits_1(self, runner, tmp_path):
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        result = run(runner, "generate", "--log", str(empty))
        assert result.exit_code == 1
        assert stderr_payload(result)["stage"] == "validation"

    def test_rejected_event_exits_1(self, runner, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"kind": "teleport"}\n')
        result = run(runner, "generate", "--log", str(bad))
        assert result.exit_code == 1
        assert stderr_payload(result)["code"] == "bad_event"


class TestPlan:
    def test_prints_compact_levels(self, runner, tmp_path):
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        result = run(runner, "plan", "--workflow", str(workflow))
        assert result.exit_code == 0
        line = result.output.strip()
        assert line == '[["SearchFlights"],["SelectFlight"],["SummarizeResults"]]'
        assert json.loads(line) == [["SearchFlights"], ["SelectFlight"], ["SummarizeResults"]]

    def test_invalid_json_exits_1(self, runner, tmp_path):
        bad = tmp_path / "w.json"
        bad.write_text("not json")
        result = run(runner, "plan", "--workflow", str(bad))
        assert result.exit_code == 1
        assert stderr_payload(result)["code"] == "bad_workflow"

    def test_broken_graph_exits_1(self, runner, tmp_path):
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        d = json.loads(workflow.read_text())
        d["nodes"][0]["parent"] = [d["nodes"][-1]["name"]]
        workflow.write_text(json.dumps(d))
        result = run(runner, "plan", "--workflow", str(workflow))
        assert result.exit_code == 1
        assert stderr_payload(result)["code"] == "not_executable"

    def test_missing_workflow_exits_4(self, runner, tmp_path):
        result = run(runner, "plan", "--workflow", str(tmp_path / "absent.json"))
        assert result.exit_code == 4


class TestAdapt:
    def test_replaces_values_via_placeholders(self, runner, tmp_path):
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        result = run(
            runner,
            "adapt",
            "--workflow",
            str(workflow),
            "--instruction",
            "Fly from Boston instead of New York and to Seattle instead of San Francisco",
        )
        assert result.exit_code == 0
        adapted = workflow_from_json(result.output)
        prompts = "\n".join(n.prompt for n in adapted.nodes)
        assert "Boston" in prompts
        assert "Seattle" in prompts

    def test_blank_instruction_fails(self, runner, tmp_path):
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        result = run(runner, "adapt", "--workflow", str(workflow), "--instruction", "  ")
        assert result.exit_code == 1
        assert stderr_payload(result)["code"] == "missing_instruction"


class TestExecute:
    def test_result_json_reaches_booking(self, runner, tmp_path):
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        out = tmp_path / "result.json"
        result = run(
            runner,
            "execute",
            "--workflow",
            str(workflow),
            "--fixtures",
            SIM_PAGES,
            "--out",
            str(out),
        )
        assert result.exit_code == 0, result.stderr
        payload = json.loads(out.read_text())
        assert payload["final_output"].startswith("# SummarizeResults")
        assert "Delta" in payload["final_output"]
        assert {r["status"] for r in payload["results"].values()} == {"succeeded"}

    def test_fixtures_directory_accepted(self, runner, tmp_path):
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        result = run(
            runner, "execute", "--workflow", str(workflow), "--fixtures", str(FIXTURES)
        )
        assert result.exit_code == 0, result.stderr
        assert "Delta" in result.output

    def test_unknown_fixture_page_still_reports_result(self, runner, tmp_path):
        # missing pages fail nodes, not the run: containment keeps the result shape
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        result = run(runner, "execute", "--workflow", str(workflow))
        assert result.exit_code == 0
        payload = json.loads(result.output)
        statuses = {name: r["status"] for name, r in payload["results"].items()}
        assert statuses["SearchFlights"] == "failed"
        assert statuses["SelectFlight"] == "skipped"

    def test_bad_fixture_file_exits_4(self, runner, tmp_path):
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        bad = tmp_path / "pages.json"
        bad.write_text("[")
        result = run(
            runner, "execute", "--workflow", str(workflow), "--fixtures", str(bad)
        )
        assert result.exit_code == 4
        assert stderr_payload(result)["code"] == "bad_fixtures"

    def test_cdp_without_endpoint_exits_3(self, runner, tmp_path):
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        result = run(runner, "execute", "--workflow", str(workflow), "--driver", "cdp")
        assert result.exit_code == 3
        assert stderr_payload(result)["code"] == "driver_failed"

    def test_store_path_persists_node_results(self, runner, tmp_path):
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        config = tmp_path / "config.yaml"
        db = tmp_path / "runs.db"
        config.write_text(f"store_path: {db}\n")
        result = run(
            runner,
            "--config",
            str(config),
            "execute",
            "--workflow",
            str(workflow),
            "--fixtures",
            SIM_PAGES,
        )
        assert result.exit_code == 0, result.stderr
        from demoflow.execution import SessionStore

        store = SessionStore(db)
        try:
            assert len(store.history("cli")) == 3
        finally:
            store.close()


class TestBundles:
    def test_export_import_round_trip_bytes(self, runner, tmp_path):
        workflow = tmp_path / "w.json"
        generate_to(runner, workflow)
        bundle = tmp_path / "w.bundle.zip"
        result = run(runner, "export", "--workflow", str(workflow), "--out", str(bundle))
        assert result.exit_code == 0
        back = tmp_path / "back.json"
        result = run(runner, "import", "--bundle", str(bundle), "--out", str(back))
        assert result.exit_code == 0
        assert back.read_bytes() == workflow.read_bytes()

    def test_import_garbage_exits_4(self, runner, tmp_path):
        junk = tmp_path / "junk.zip"
        junk.write_text("not a zip")
        result = run(runner, "import", "--bundle", str(junk))
        assert result.exit_code == 4
        assert stderr_payload(result)["code"] == "bad_bundle"

    def test_import_missing_file_exits_4(self, runner, tmp_path):
        result = run(runner, "import", "--bundle", str(tmp_path / "absent.zip"))
        assert result.exit_code == 4


class TestConfigPlumbing:
    def test_bad_config_file_exits_4(self, runner, tmp_path):
        config = tmp_path / "config.yaml"
        config.write_text("bogus_field: 1\n")
        result = run(runner, "--config", str(config), "plan", "--workflow", "irrelevant.json")
        assert result.exit_code == 4
        assert stderr_payload(result)["code"] == "bad_config"

    def test_env_sets_backend(self, runner, tmp_path):
        # an invalid backend choice proves the env var is consulted
        result = run(
            runner,
            "generate",
            "--log",
            DEMO_LOG,
            env={"DEMOFLOW_BACKEND": "quantum"},
        )
        assert result.exit_code == 4
        assert stderr_payload(result)["code"] == "bad_config"

    def test_flag_beats_env(self, runner, tmp_path):
        result = run(
            runner,
            "generate",
            "--log",
            DEMO_LOG,
            "--backend",
            "mock",
            env={"DEMOFLOW_BACKEND": "quantum"},
        )
        assert result.exit_code == 0
