"""The worker toolbox: eight built-in tools plus environment tools and function skills.

Every handler runs against the worker's private sandbox with a per-tool
timeout; observations are truncated to a byte cap with an explicit marker so
context truncation stays observable in trajectories.
"""
from __future__ import annotations

import os
import shlex
import subprocess
import sys
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .clock import Clock, SystemClock
from .errors import (
    NotResolvable,
    SlotNotOwned,
    ToolTimeout,
    UnknownSkill,
    UnknownTool,
)
from .sandbox import Sandbox
from .skills.bank import SkillBank
from .skills.model import Skill
from .skills.resolver import ResolveConfig, resolve_skill
from .workboard import edit_slot, read_workboard, render_board

BUILTIN_TOOLS = (
    "bash",
    "str_replace",
    "file_create",
    "view",
    "read_skill",
    "route_skill",
    "read_workboard",
    "edit_workboard",
)
ENVIRONMENT_TOOLS = ("search", "fetch")

DEFAULT_TOOL_TIMEOUT_S = 30.0
DEFAULT_OBSERVATION_CAP = 16 * 1024
TRUNCATION_MARKER = "…[truncated]"

Handler = Callable[[dict], str]


@dataclass
class ToolRegistry:
    handlers: dict[str, Handler] = field(default_factory=dict)
    timeouts: dict[str, float] = field(default_factory=dict)
    default_timeout_s: float = DEFAULT_TOOL_TIMEOUT_S
    observation_cap: int = DEFAULT_OBSERVATION_CAP

    def register(self, name: str, handler: Handler, timeout_s: float | None = None) -> None:
        self.handlers[name] = handler
        if timeout_s is not None:
            self.timeouts[name] = timeout_s

    def timeout_for(self, name: str) -> float:
        return self.timeouts.get(name, self.default_timeout_s)

    def names(self) -> list[str]:
        return sorted(self.handlers)


def truncate_observation(text: str, cap: int = DEFAULT_OBSERVATION_CAP) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= cap:
        return text
    marker = TRUNCATION_MARKER.encode("utf-8")
    keep = max(0, cap - len(marker))
    return raw[:keep].decode("utf-8", errors="ignore") + TRUNCATION_MARKER


def dispatch_tool(
    registry: ToolRegistry,
    name: str,
    arguments: dict,
    sandbox: Sandbox,
    clock: Clock | None = None,
) -> str:
    """Run one tool under its timeout; return the (possibly truncated) observation.

    Under the system clock a hung handler is abandoned at the deadline; under
    a fake clock the handler runs to completion and its simulated elapsed time
    is compared against the budget.
    """
    if name not in registry.handlers:
        raise UnknownTool(f"tool {name!r} is not registered")
    handler = registry.handlers[name]
    timeout_s = registry.timeout_for(name)
    clock = clock or SystemClock()

    if isinstance(clock, SystemClock):
        outcome: dict = {}

        def target():
            try:
                outcome["value"] = handler(arguments)
            except BaseException as exc:  # propagated below
                outcome["error"] = exc

        thread = threading.Thread(target=target, daemon=True)
        thread.start()
        thread.join(timeout_s)
        if thread.is_alive():
            raise ToolTimeout(f"tool {name!r} exceeded {timeout_s}s")
        if "error" in outcome:
            raise outcome["error"]
        observation = outcome["value"]
    else:
        started = clock.now()
        observation = handler(arguments)
        if clock.now() - started > timeout_s:
            raise ToolTimeout(f"tool {name!r} exceeded {timeout_s}s")

    return truncate_observation(observation, registry.observation_cap)


# -- built-in handlers -------------------------------------------------------

def _poisoned_network_env() -> dict[str, str]:
    env = dict(os.environ)
    blackhole = "http://127.0.0.1:1"
    for var in ("http_proxy", "https_proxy", "HTTP_PROXY", "HTTPS_PROXY", "ftp_proxy", "FTP_PROXY"):
        env[var] = blackhole
    env.pop("no_proxy", None)
    env.pop("NO_PROXY", None)
    env["TABLECREW_NETWORK"] = "disabled"
    return env


def make_bash_tool(sandbox: Sandbox, timeout_s: float = DEFAULT_TOOL_TIMEOUT_S,
                   network_enabled: bool = False) -> Handler:
    def bash(args: dict) -> str:
        command = args["command"]
        env = None if network_enabled else _poisoned_network_env()
        try:
            proc = subprocess.run(
                command, shell=True, cwd=str(sandbox.root), env=env,
                capture_output=True, text=True, timeout=timeout_s,
            )
        except subprocess.TimeoutExpired:
            raise ToolTimeout(f"bash command exceeded {timeout_s}s")
        out = proc.stdout + proc.stderr
        if proc.returncode != 0:
            out += f"\n[exit code {proc.returncode}]"
        return out

    return bash


def make_file_tools(sandbox: Sandbox) -> dict[str, Handler]:
    def str_replace(args: dict) -> str:
        path = sandbox.resolve(args["path"])
        content = path.read_text(encoding="utf-8")
        needle = args["old"]
        if needle not in content:
            return f"error: needle not found in {args['path']}; file unchanged"
        path.write_text(content.replace(needle, args["new"], 1), encoding="utf-8")
        return f"replaced first occurrence in {args['path']}"

    def file_create(args: dict) -> str:
        path = sandbox.resolve(args["path"])
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(args.get("content", ""), encoding="utf-8")
        return f"created {args['path']}"

    def view(args: dict) -> str:
        return sandbox.resolve(args["path"]).read_text(encoding="utf-8")

    return {"str_replace": str_replace, "file_create": file_create, "view": view}


def make_skill_tools(bank: SkillBank, resolve_config: ResolveConfig | None = None,
                     remote: SkillBank | None = None) -> dict[str, Handler]:
    def read_skill(args: dict) -> str:
        try:
            return bank.latest(args["name"]).body
        except UnknownSkill:
            return f"error: unknown skill {args['name']!r}"

    def route_skill(args: dict) -> str:
        try:
            skill = resolve_skill(bank, args["query"], config=resolve_config, remote=remote)
        except NotResolvable as exc:
            return f"error: {exc}"
        return f"{skill.name}: {skill.description}"

    return {"read_skill": read_skill, "route_skill": route_skill}


def make_workboard_tools(board_path: Path, writer_id: str) -> dict[str, Handler]:
    def read_board(args: dict) -> str:
        return render_board(read_workboard(board_path))

    def edit_board(args: dict) -> str:
        mode = args.get("mode", "append")
        try:
            edit_slot(board_path, writer_id, args["payload"], mode=mode)
        except SlotNotOwned as exc:
            return f"error: {exc}"
        return f"ok: slot {writer_id} updated ({mode})"

    return {"read_workboard": read_board, "edit_workboard": edit_board}


def make_environment_tools(env) -> dict[str, Handler]:
    def search(args: dict) -> str:
        results = env.search(args["query"])
        if not results:
            return "no results"
        lines = []
        for i, r in enumerate(results, start=1):
            lines.append(f"{i}. {r.title} — {r.url}\n   {r.snippet}")
        return "\n".join(lines)

    def fetch(args: dict) -> str:
        return env.fetch(args["url"])

    return {"search": search, "fetch": fetch}


def make_function_skill_tool(skill: Skill, sandbox: Sandbox,
                             interpreter: str | None = None,
                             timeout_s: float = DEFAULT_TOOL_TIMEOUT_S) -> Handler:
    """Materialise a function skill as a callable tool running in the sandbox."""
    python = interpreter or sys.executable

    def run(args: dict) -> str:
        script_dir = sandbox.root / ".skills"
        script_dir.mkdir(exist_ok=True)
        script = script_dir / f"{skill.name}_v{skill.version}.py"
        if not script.exists():
            script.write_text(skill.body, encoding="utf-8")
        argv = [python, str(script)]
        for key, value in args.items():
            argv.extend([f"--{key}", str(value)])
        try:
            proc = subprocess.run(
                argv, cwd=str(sandbox.root), env=_poisoned_network_env(),
                capture_output=True, text=True, timeout=timeout_s,
            )
        except subprocess.TimeoutExpired:
            raise ToolTimeout(f"skill {skill.name!r} exceeded {timeout_s}s")
        out = proc.stdout + proc.stderr
        if proc.returncode != 0:
            out += f"\n[exit code {proc.returncode}]"
        return out

    return run


def build_registry(
    sandbox: Sandbox,
    board_path: Path,
    writer_id: str,
    skill_bank: SkillBank,
    web_env,
    tool_timeout_s: float = DEFAULT_TOOL_TIMEOUT_S,
    observation_cap: int = DEFAULT_OBSERVATION_CAP,
    resolve_config: ResolveConfig | None = None,
    remote_bank: SkillBank | None = None,
    network_enabled: bool = False,
) -> ToolRegistry:
    """Assemble exactly the eight built-ins plus search/fetch for one worker."""
    registry = ToolRegistry(default_timeout_s=tool_timeout_s, observation_cap=observation_cap)
    registry.register("bash", make_bash_tool(sandbox, tool_timeout_s, network_enabled))
    for name, handler in make_file_tools(sandbox).items():
        registry.register(name, handler)
    for name, handler in make_skill_tools(skill_bank, resolve_config, remote_bank).items():
        registry.register(name, handler)
    for name, handler in make_workboard_tools(board_path, writer_id).items():
        registry.register(name, handler)
    for name, handler in make_environment_tools(web_env).items():
        registry.register(name, handler)
    return registry


def register_function_skills(registry: ToolRegistry, skills: list[Skill], sandbox: Sandbox,
                             interpreter: str | None = None) -> None:
    for skill in skills:
        if skill.kind == "function":
            registry.register(skill.name, make_function_skill_tool(skill, sandbox, interpreter))


def shell_quote(parts: list[str]) -> str:
    return " ".join(shlex.quote(p) for p in parts)
