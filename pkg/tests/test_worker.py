import json

import pytest

from tablecrew.backends import PlaybookEntry, ScriptedBackend
from tablecrew.clock import FakeClock
from tablecrew.planning import WorkerConfig
from tablecrew.sandbox import Sandbox
from tablecrew.skills.bank import SkillBank
from tablecrew.tables import TableSchema
from tablecrew.toolbox import build_registry
from tablecrew.trajectory import SubtaskSpec
from tablecrew.webenv import FixtureCorpus, FixtureEnvironment
from tablecrew.worker import format_response, format_tool_call, run_worker
from tablecrew.workboard import init_workboard, read_workboard

SCHEMA = TableSchema.of(("Date", "date"), ("City", "categorical"))
TABLE = "| Date | City |\n| --- | --- |\n| 2020-01-01 | Austin |"


@pytest.fixture
def harness(tmp_path):
    corpus = FixtureCorpus(tmp_path / "corpus")
    corpus.put("search", "city dates", [
        {"title": "Archive", "url": "https://a.example", "snippet": "dates"},
    ])
    corpus.put("fetch", "https://a.example", TABLE)
    env = FixtureEnvironment(corpus)

    spec = SubtaskSpec(id="t1", instruction="collect the city dates", partition="cities",
                       schema=SCHEMA, target_volume=(1, 3))
    board_path = tmp_path / "board.md"
    init_workboard([spec], "ctx", board_path)
    sandbox = Sandbox(tmp_path / "sb")
    bank = SkillBank(tmp_path / "bank")

    def make(backend, clock=None, max_steps=6):
        registry = build_registry(
            sandbox=sandbox, board_path=board_path, writer_id="t1",
            skill_bank=bank, web_env=env,
        )
        config = WorkerConfig(max_steps=max_steps, skill_bank=bank, workboard_path=board_path)
        return spec, config, registry, backend, sandbox, clock

    return make, board_path


def test_three_step_scripted_path(harness):
    make, board_path = harness
    backend = ScriptedBackend([PlaybookEntry(pattern=r"collect the city dates", responses=[
        format_tool_call("search", query="city dates"),
        format_tool_call("fetch", url="https://a.example"),
        format_response(TABLE),
    ])])
    spec, config, registry, backend, sandbox, clock = make(backend)
    result = run_worker(spec, config, registry, backend, sandbox=sandbox)
    assert result.status == "done"
    assert len(result.trajectory.steps) == 3
    assert result.trajectory.steps[-1].kind == "response"
    assert result.trajectory.terminated_normally
    board = read_workboard(board_path)
    assert board.status_of("t1") == "done"
    assert TABLE in board.slots["t1"]


def test_never_responding_worker_fails_at_exactly_max_steps(harness):
    make, board_path = harness
    backend = ScriptedBackend([PlaybookEntry(pattern=r"collect", responses=[
        format_tool_call("search", query="city dates"),
    ])])
    spec, config, registry, backend, sandbox, clock = make(backend, max_steps=4)
    result = run_worker(spec, config, registry, backend, sandbox=sandbox)
    assert result.status == "failed"
    assert len(result.trajectory.steps) == 4
    assert any(a.kind == "step_exhaustion" for a in result.trajectory.anomalies)
    assert read_workboard(board_path).status_of("t1") == "failed"


def test_tool_timeout_records_anomaly_and_continues(harness):
    make, board_path = harness
    clock = FakeClock()
    backend = ScriptedBackend([PlaybookEntry(pattern=r"collect", responses=[
        format_tool_call("slow", wait=31.0),
        format_response(TABLE),
    ])], clock=clock)
    spec, config, registry, backend, sandbox, _ = make(backend, clock=clock)

    def slow_tool(args):
        clock.sleep(args["wait"])
        return "slow result"

    registry.register("slow", slow_tool, timeout_s=30.0)
    result = run_worker(spec, config, registry, backend, sandbox=sandbox, clock=clock)
    assert result.status == "done"
    kinds = [a.kind for a in result.trajectory.anomalies]
    assert "tool_timeout" in kinds
    assert len(result.trajectory.steps) == 2  # timed-out call still recorded


def test_generation_timeout_then_recovery(harness):
    make, _ = harness
    clock = FakeClock()
    backend = ScriptedBackend([PlaybookEntry(
        pattern=r"collect",
        responses=[format_response(TABLE), format_response(TABLE)],
        delays_s=[130.0, 1.0],
    )], clock=clock)
    spec, config, registry, backend, sandbox, _ = make(backend)
    result = run_worker(spec, config, registry, backend, sandbox=sandbox, clock=clock)
    assert result.status == "done"
    assert [a.kind for a in result.trajectory.anomalies] == ["generation_timeout"]


def test_repeated_generation_timeouts_fail_worker(harness):
    make, board_path = harness
    clock = FakeClock()
    backend = ScriptedBackend([PlaybookEntry(
        pattern=r"collect",
        responses=[format_response(TABLE)] * 5,
        delays_s=[130.0] * 5,
    )], clock=clock)
    spec, config, registry, backend, sandbox, _ = make(backend)
    result = run_worker(spec, config, registry, backend, sandbox=sandbox, clock=clock)
    assert result.status == "failed"
    assert len(result.trajectory.steps) == 0
    assert sum(1 for a in result.trajectory.anomalies if a.kind == "generation_timeout") == 3


def test_malformed_action_consumes_step_and_continues(harness):
    make, _ = harness
    backend = ScriptedBackend([PlaybookEntry(pattern=r"collect", responses=[
        "this is not an action",
        format_response(TABLE),
    ])])
    spec, config, registry, backend, sandbox, _ = make(backend)
    result = run_worker(spec, config, registry, backend, sandbox=sandbox)
    assert result.status == "done"
    assert len(result.trajectory.steps) == 2
    assert result.trajectory.steps[0].tool is None


def test_backend_hard_error_fails_worker_without_raising(harness):
    make, board_path = harness
    backend = ScriptedBackend([PlaybookEntry(pattern=r"never-matching-zzz", responses=["x"])])
    spec, config, registry, backend, sandbox, _ = make(backend)
    result = run_worker(spec, config, registry, backend, sandbox=sandbox)
    assert result.status == "failed"
    assert result.error is not None
    assert read_workboard(board_path).status_of("t1") == "failed"


def test_unknown_tool_becomes_error_observation(harness):
    make, _ = harness
    backend = ScriptedBackend([PlaybookEntry(pattern=r"collect", responses=[
        format_tool_call("teleport"),
        format_response(TABLE),
    ])])
    spec, config, registry, backend, sandbox, _ = make(backend)
    result = run_worker(spec, config, registry, backend, sandbox=sandbox)
    assert result.status == "done"
    assert len(result.trajectory.steps) == 2


def test_trajectory_indices_strictly_increase(harness):
    make, _ = harness
    backend = ScriptedBackend([PlaybookEntry(pattern=r"collect", responses=[
        format_tool_call("search", query="city dates"),
        format_tool_call("fetch", url="https://a.example"),
        format_response(TABLE),
    ])])
    spec, config, registry, backend, sandbox, _ = make(backend)
    result = run_worker(spec, config, registry, backend, sandbox=sandbox)
    indices = [s.index for s in result.trajectory.steps]
    assert indices == sorted(indices) and len(set(indices)) == len(indices)
