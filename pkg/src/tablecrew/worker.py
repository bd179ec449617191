"""The lower-level worker: a bounded reason-act loop over the toolbox.

Each step either calls a tool (observation recorded, 30 s tool budget) or
emits a terminal response written to the worker's workboard slot. Generation
calls run under their own 120 s budget. Failures never surface to the caller;
they are encoded as checklist status plus trajectory anomalies.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

from .backends import GenerationBackend, extract_json_payload
from .clock import Clock, SystemClock
from .errors import (
    GenerationTimeout,
    NotResolvable,
    SandboxViolation,
    TableCrewError,
    ToolTimeout,
    UnknownTool,
)
from .planning import WorkerConfig
from .prompting import load_prompt, render_prompt
from .sandbox import Sandbox
from .skills.model import Skill
from .skills.resolver import ResolveConfig, SkillCreator, resolve_skill
from .toolbox import TRUNCATION_MARKER, ToolRegistry, dispatch_tool
from .trajectory import SubtaskSpec, Trajectory, TrajectoryStep, digest_observation
from .workboard import edit_slot, set_status

logger = logging.getLogger(__name__)

TOOL_TIMEOUT_OBSERVATION = "[tool timed out after {timeout}s]"


@dataclass
class WorkerResult:
    response: str
    trajectory: Trajectory
    status: str  # "done" | "failed"
    resolved_skill: str | None = None
    error: str | None = None


def _resolve_execution_skill(
    spec: SubtaskSpec,
    config: WorkerConfig,
    resolve_config: ResolveConfig | None,
    creator: SkillCreator | None,
) -> Skill | None:
    bank = config.skill_bank
    if bank is None:
        return None
    # Runtime synthesis only while the bank is writable (training episodes).
    active_creator = None if bank.frozen else creator
    try:
        return resolve_skill(bank, spec.instruction, creator=active_creator, config=resolve_config)
    except NotResolvable:
        return None


def _format_observations(history: list[tuple[int, str | None, str]], window: int) -> tuple[str, bool]:
    """Render the last *window* observations; report whether older ones were dropped."""
    kept = history[-window:]
    dropped = len(history) > window
    if not kept:
        return "(none yet)", False
    lines = []
    for index, tool, obs in kept:
        label = tool or "action"
        lines.append(f"[step {index}] {label}:\n{obs}")
    return "\n".join(lines), dropped


def run_worker(
    spec: SubtaskSpec,
    config: WorkerConfig,
    tools: ToolRegistry,
    backend: GenerationBackend,
    sandbox: Sandbox | None = None,
    clock: Clock | None = None,
    resolve_config: ResolveConfig | None = None,
    creator: SkillCreator | None = None,
) -> WorkerResult:
    """Run one subtask to terminal status; at most ``max_steps`` steps."""
    clock = clock or SystemClock()
    board_path = config.workboard_path
    if board_path is None:
        raise ValueError("worker config needs the workboard path")
    sandbox = sandbox or Sandbox(root=_default_sandbox_root(board_path, spec.id))

    set_status(board_path, spec.id, "running", actor_id=spec.id)
    skill = _resolve_execution_skill(spec, config, resolve_config, creator)

    template = load_prompt("worker_step")
    base_prompt = render_prompt(
        template,
        tools=", ".join(tools.names()),
        subtask_id=spec.id,
        instruction=spec.instruction,
        partition=spec.partition,
        columns=", ".join(spec.schema.names),
        target_volume=f"[{spec.target_volume[0]}, {spec.target_volume[1]}]",
        skill=skill.body if skill else "(no execution skill resolved)",
    )

    trajectory = Trajectory(worker_id=spec.id)
    history: list[tuple[int, str | None, str]] = []
    truncation_noted = False
    consecutive_gen_timeouts = 0
    response_text = ""
    status = "failed"

    step_index = 0
    while step_index < config.max_steps:
        observations, dropped = _format_observations(history, config.observation_window)
        if dropped and not truncation_noted:
            trajectory.record_anomaly("context_truncation", step_index + 1,
                                      "older observations dropped from prompt")
            truncation_noted = True
        prompt = render_prompt(base_prompt, observations=observations)

        gen_started = clock.now()
        try:
            text = backend.generate(
                prompt, max_tokens=4096, temperature=0.0,
                timeout_s=config.generation_timeout_s,
            )
        except GenerationTimeout:
            consecutive_gen_timeouts += 1
            trajectory.record_anomaly(
                "generation_timeout", step_index + 1,
                f"generation exceeded {config.generation_timeout_s}s",
            )
            if consecutive_gen_timeouts >= config.max_consecutive_generation_timeouts:
                break
            continue
        except TableCrewError as exc:
            # Backend hard failure: the worker fails, the episode continues.
            logger.warning("worker %s backend error: %s", spec.id, exc)
            backend_error = str(exc)
            set_status(board_path, spec.id, "failed", actor_id=spec.id)
            return WorkerResult(
                response="", trajectory=trajectory, status="failed",
                resolved_skill=skill.name if skill else None, error=backend_error,
            )
        consecutive_gen_timeouts = 0
        step_index += 1
        now = clock.now()
        latency_ms = (now - gen_started) * 1000.0

        action = extract_json_payload(text)
        if isinstance(action, dict) and "respond" in action:
            response_text = str(action["respond"])
            trajectory.append(TrajectoryStep(
                index=step_index, ts=now, kind="response",
                obs_digest=digest_observation(response_text), latency_ms=latency_ms,
            ))
            edit_slot(board_path, spec.id, response_text, mode="append")
            set_status(board_path, spec.id, "done", actor_id=spec.id)
            status = "done"
            break

        if isinstance(action, dict) and "tool" in action:
            tool_name = str(action["tool"])
            args = action.get("args") or {}
            tool_started = clock.now()
            try:
                observation = dispatch_tool(tools, tool_name, args, sandbox, clock=clock)
            except ToolTimeout:
                observation = TOOL_TIMEOUT_OBSERVATION.format(timeout=tools.timeout_for(tool_name))
                trajectory.record_anomaly("tool_timeout", step_index,
                                          f"{tool_name} exceeded its budget")
            except (UnknownTool, SandboxViolation) as exc:
                observation = f"error: {exc}"
            except Exception as exc:  # tool bugs become observations, not crashes
                logger.exception("tool %s raised", tool_name)
                observation = f"error: {type(exc).__name__}: {exc}"
            if observation.endswith(TRUNCATION_MARKER) and not truncation_noted:
                trajectory.record_anomaly("context_truncation", step_index,
                                          "observation truncated at byte cap")
                truncation_noted = True
            trajectory.append(TrajectoryStep(
                index=step_index, ts=clock.now(), kind="tool_call",
                tool=tool_name, args=args,
                obs_digest=digest_observation(observation),
                latency_ms=(clock.now() - tool_started) * 1000.0,
            ))
            history.append((step_index, tool_name, observation))
            continue

        # Malformed action: record it and let the backend try again next step.
        observation = f"error: could not parse action from output: {text[:200]!r}"
        trajectory.append(TrajectoryStep(
            index=step_index, ts=now, kind="tool_call",
            tool=None, args={"raw": text[:200]},
            obs_digest=digest_observation(observation), latency_ms=latency_ms,
        ))
        history.append((step_index, None, observation))

    if status != "done":
        if step_index >= config.max_steps:
            trajectory.record_anomaly("step_exhaustion", step_index,
                                      f"no response within {config.max_steps} steps")
        set_status(board_path, spec.id, "failed", actor_id=spec.id)

    return WorkerResult(
        response=response_text,
        trajectory=trajectory,
        status=status,
        resolved_skill=skill.name if skill else None,
    )


def _default_sandbox_root(board_path, worker_id: str):
    from pathlib import Path

    return Path(board_path).parent / "sandboxes" / worker_id


def parse_action(text: str) -> dict | None:
    """Expose action extraction for tests: tool call or respond object."""
    payload = extract_json_payload(text)
    if isinstance(payload, dict) and ("tool" in payload or "respond" in payload):
        return payload
    return None


def format_tool_call(tool: str, **args) -> str:
    return json.dumps({"tool": tool, "args": args})


def format_response(text: str) -> str:
    return json.dumps({"respond": text})
