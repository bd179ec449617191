import time

import pytest

from tablecrew.clock import FakeClock, SystemClock
from tablecrew.errors import SandboxViolation, ToolTimeout, UnknownTool
from tablecrew.sandbox import Sandbox
from tablecrew.skills.bank import SkillBank, append_skill, new_skill
from tablecrew.tables import TableSchema
from tablecrew.toolbox import (
    BUILTIN_TOOLS,
    ENVIRONMENT_TOOLS,
    ToolRegistry,
    build_registry,
    dispatch_tool,
    make_function_skill_tool,
    register_function_skills,
    truncate_observation,
)
from tablecrew.webenv import FixtureCorpus, FixtureEnvironment
from tablecrew.workboard import init_workboard, read_workboard

from conftest import make_specs


@pytest.fixture
def env(tmp_path):
    corpus = FixtureCorpus(tmp_path / "corpus")
    corpus.put("search", "find pages", [
        {"title": "Page A", "url": "https://a.example", "snippet": "snip"},
    ])
    corpus.put("fetch", "https://a.example", "BODY BYTES")
    return FixtureEnvironment(corpus)


@pytest.fixture
def setup(tmp_path, env):
    schema = TableSchema.of(("A", "text"))
    board_path = tmp_path / "board.md"
    init_workboard(make_specs(schema, "t1", "t2"), "ctx", board_path)
    sandbox = Sandbox(tmp_path / "sb")
    bank = SkillBank(tmp_path / "bank")
    append_skill(bank, new_skill(
        name="tour-extraction", kind="knowledge",
        description="extract concert tour dates", body="SKILL BODY HERE", created_by="t",
    ))
    registry = build_registry(
        sandbox=sandbox, board_path=board_path, writer_id="t1",
        skill_bank=bank, web_env=env,
    )
    return registry, sandbox, board_path, bank


def test_registry_contains_exactly_builtins_plus_env(setup):
    registry, *_ = setup
    assert set(registry.names()) == set(BUILTIN_TOOLS) | set(ENVIRONMENT_TOOLS)


def test_unknown_tool(setup):
    registry, sandbox, *_ = setup
    with pytest.raises(UnknownTool):
        dispatch_tool(registry, "teleport", {}, sandbox)


def test_view_returns_contents_verbatim(setup):
    registry, sandbox, *_ = setup
    (sandbox.root / "f.txt").write_text("line1\nline2\nline3\n")
    obs = dispatch_tool(registry, "view", {"path": "f.txt"}, sandbox)
    assert obs == "line1\nline2\nline3\n"


def test_str_replace_miss_leaves_file_unchanged(setup):
    registry, sandbox, *_ = setup
    (sandbox.root / "f.txt").write_text("hello world")
    obs = dispatch_tool(registry, "str_replace",
                        {"path": "f.txt", "old": "absent", "new": "x"}, sandbox)
    assert obs.startswith("error:")
    assert (sandbox.root / "f.txt").read_text() == "hello world"


def test_str_replace_first_occurrence(setup):
    registry, sandbox, *_ = setup
    (sandbox.root / "f.txt").write_text("aa aa")
    dispatch_tool(registry, "str_replace", {"path": "f.txt", "old": "aa", "new": "bb"}, sandbox)
    assert (sandbox.root / "f.txt").read_text() == "bb aa"


def test_file_create(setup):
    registry, sandbox, *_ = setup
    dispatch_tool(registry, "file_create", {"path": "sub/new.txt", "content": "data"}, sandbox)
    assert (sandbox.root / "sub" / "new.txt").read_text() == "data"


def test_sandbox_violation_on_escape(setup):
    registry, sandbox, *_ = setup
    with pytest.raises(SandboxViolation):
        dispatch_tool(registry, "view", {"path": "../../etc/passwd"}, sandbox)
    with pytest.raises(SandboxViolation):
        dispatch_tool(registry, "file_create", {"path": "/tmp/outside.txt", "content": "x"}, sandbox)


def test_bash_runs_in_sandbox_with_network_poisoned(setup):
    registry, sandbox, *_ = setup
    obs = dispatch_tool(registry, "bash", {"command": "pwd && echo proxy=$http_proxy"}, sandbox)
    assert str(sandbox.root) in obs
    assert "proxy=http://127.0.0.1:1" in obs
    assert "TABLECREW_NETWORK" not in obs  # sanity: only the vars we expect printed


def test_read_skill_returns_body(setup):
    registry, sandbox, _, _ = setup
    assert dispatch_tool(registry, "read_skill", {"name": "tour-extraction"}, sandbox) == "SKILL BODY HERE"
    assert dispatch_tool(registry, "read_skill", {"name": "ghost"}, sandbox).startswith("error:")


def test_route_skill_returns_name_and_description(setup):
    registry, sandbox, *_ = setup
    obs = dispatch_tool(registry, "route_skill", {"query": "extract concert dates"}, sandbox)
    assert obs == "tour-extraction: extract concert tour dates"


def test_workboard_tools(setup):
    registry, sandbox, board_path, _ = setup
    obs = dispatch_tool(registry, "read_workboard", {}, sandbox)
    assert obs.startswith("# Workboard\n")
    dispatch_tool(registry, "edit_workboard", {"payload": "found rows"}, sandbox)
    assert read_workboard(board_path).slots["t1"] == "found rows"


def test_search_and_fetch_deterministic(setup):
    registry, sandbox, *_ = setup
    obs1 = dispatch_tool(registry, "search", {"query": "find pages"}, sandbox)
    obs2 = dispatch_tool(registry, "search", {"query": "find pages"}, sandbox)
    assert obs1 == obs2
    assert "https://a.example" in obs1
    fetched1 = dispatch_tool(registry, "fetch", {"url": "https://a.example"}, sandbox)
    fetched2 = dispatch_tool(registry, "fetch", {"url": "https://a.example"}, sandbox)
    assert fetched1 == fetched2 == "BODY BYTES"


def test_observation_truncated_at_byte_cap():
    text = "x" * 100
    out = truncate_observation(text, cap=50)
    assert out.endswith("…[truncated]")
    assert len(out.encode("utf-8")) <= 50
    assert truncate_observation("short", cap=50) == "short"


def test_dispatch_truncates_large_observation(setup, tmp_path):
    registry, sandbox, *_ = setup
    registry.observation_cap = 64
    (sandbox.root / "big.txt").write_text("y" * 500)
    obs = dispatch_tool(registry, "view", {"path": "big.txt"}, sandbox)
    assert obs.endswith("…[truncated]")
    assert len(obs.encode("utf-8")) <= 64


def test_tool_timeout_under_fake_clock(setup):
    registry, sandbox, *_ = setup
    clock = FakeClock()

    def slow_tool(args):
        clock.sleep(31.0)
        return "finished anyway"

    registry.register("slow", slow_tool, timeout_s=30.0)
    with pytest.raises(ToolTimeout):
        dispatch_tool(registry, "slow", {}, sandbox, clock=clock)


def test_tool_within_budget_under_fake_clock(setup):
    registry, sandbox, *_ = setup
    clock = FakeClock()

    def quick(args):
        clock.sleep(5.0)
        return "done"

    registry.register("quick", quick, timeout_s=30.0)
    assert dispatch_tool(registry, "quick", {}, sandbox, clock=clock) == "done"


def test_tool_timeout_under_system_clock(setup):
    registry, sandbox, *_ = setup

    def hang(args):
        time.sleep(2.0)
        return "late"

    registry.register("hang", hang, timeout_s=0.1)
    with pytest.raises(ToolTimeout):
        dispatch_tool(registry, "hang", {}, sandbox, clock=SystemClock())


def test_function_skill_tool_runs_script(setup):
    registry, sandbox, _, bank = setup
    skill = new_skill(
        name="arg-echo", kind="function", description="echoes args",
        body="import sys\nprint('|'.join(sys.argv[1:]))\n",
        created_by="t", entry="arg-echo", args=["--word"],
    )
    append_skill(bank, skill)
    register_function_skills(registry, [skill], sandbox)
    obs = dispatch_tool(registry, "arg-echo", {"word": "hello"}, sandbox)
    assert obs.strip() == "--word|hello"
