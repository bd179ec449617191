"""Upper-level orchestration: dispatch, validation, Round-2, aggregation.

The orchestrator is single-threaded around dispatch and aggregation; workers
run concurrently up to the pool ceiling and share state only through the
workboard and skill-bank locks.
"""
from __future__ import annotations

import datetime
import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .backends import GenerationBackend
from .clock import Clock, SystemClock
from .errors import EmptyResult, HeaderMismatch, NoTableFound
from .planning import (
    OrchestratorConfig,
    WorkerConfig,
    decompose,
    route_task,
    schema_from_query,
)
from .sandbox import Sandbox
from .skills.bank import SkillBank, new_skill
from .skills.model import Skill
from .skills.resolver import ResolveConfig, SkillCreator
from .tables import Cell, Query, Table, TableSchema, parse_table, render_table
from .toolbox import build_registry
from .trajectory import (
    SUBTASK_DATA,
    SubtaskSpec,
    Trajectory,
    write_trajectory_jsonl,
)
from .webenv import WebEnvironment
from .worker import WorkerResult, run_worker
from .workboard import (
    ORCHESTRATOR_ACTOR,
    Workboard,
    add_subtasks,
    init_workboard,
    read_workboard,
)

logger = logging.getLogger(__name__)


# -- dispatch ceiling ---------------------------------------------------------

class ActiveWorkerSet:
    """Counting guard over the set of currently dispatched subtask ids.

    The ceiling is asserted on every acquire; peak occupancy is recorded for
    post-hoc instrumentation.
    """

    def __init__(self, limit: int):
        self.limit = limit
        self._active: set[str] = set()
        self._lock = threading.Lock()
        self.peak = 0

    def acquire(self, worker_id: str) -> None:
        with self._lock:
            self._active.add(worker_id)
            if len(self._active) > self.limit:
                raise AssertionError(
                    f"active worker set grew to {len(self._active)} > ceiling {self.limit}"
                )
            self.peak = max(self.peak, len(self._active))

    def release(self, worker_id: str) -> None:
        with self._lock:
            self._active.discard(worker_id)

    def __len__(self) -> int:
        with self._lock:
            return len(self._active)


def run_worker_pool(specs, worker_fn, limit: int) -> tuple[dict[str, WorkerResult], int]:
    """Run one worker per spec with at most *limit* concurrent; returns peak occupancy."""
    guard = ActiveWorkerSet(limit)

    def guarded(spec):
        guard.acquire(spec.id)
        try:
            return worker_fn(spec)
        finally:
            guard.release(spec.id)

    results: dict[str, WorkerResult] = {}
    with ThreadPoolExecutor(max_workers=limit) as pool:
        futures = {spec.id: pool.submit(guarded, spec) for spec in specs}
        for sid, future in futures.items():
            results[sid] = future.result()
    return results, guard.peak


# -- validation ---------------------------------------------------------------

@dataclass
class VolumeVerdict:
    """Row-count validation over the board after all statuses are terminal."""

    missing_fraction: float
    delivered_total: int
    expected_total: float
    per_spec_delivered: dict[str, int]
    shortfall_specs: list[tuple[SubtaskSpec, int]]
    failed_specs: list[str]


def _slot_row_count(board: Workboard, spec: SubtaskSpec) -> int:
    content = board.slots.get(spec.id, "")
    if not content.strip():
        return 0
    try:
        return parse_table(content, spec.schema).row_count
    except (NoTableFound, HeaderMismatch):
        return 0


def validate_outputs(board: Workboard, specs: list[SubtaskSpec]) -> VolumeVerdict:
    """Compare delivered rows against target-volume midpoints.

    A failed subtask contributes zero delivered rows: its midpoint counts
    fully as missing. Audit subtasks carry a zero target volume and do not
    enter the denominator.
    """
    delivered: dict[str, int] = {}
    shortfalls: list[tuple[SubtaskSpec, int]] = []
    failed: list[str] = []
    expected_total = 0.0
    delivered_total = 0
    for spec in specs:
        midpoint = spec.volume_midpoint
        expected_total += midpoint
        status = board.status_of(spec.id)
        rows = 0 if status == "failed" else _slot_row_count(board, spec)
        delivered[spec.id] = rows
        delivered_total += rows
        if status == "failed":
            failed.append(spec.id)
        if spec.kind == SUBTASK_DATA and rows < midpoint:
            shortfalls.append((spec, rows))
    if expected_total <= 0:
        missing = 0.0
    else:
        missing = max(0.0, 1.0 - delivered_total / expected_total)
    return VolumeVerdict(
        missing_fraction=missing,
        delivered_total=delivered_total,
        expected_total=expected_total,
        per_spec_delivered=delivered,
        shortfall_specs=shortfalls,
        failed_specs=failed,
    )


def trigger_round2(
    verdict: VolumeVerdict,
    config: OrchestratorConfig,
    existing_ids: list[str],
    already_dispatched: bool = False,
) -> list[SubtaskSpec]:
    """Follow-up specs for shortfall partitions, iff strictly past the threshold.

    At most one Round 2 per episode: with *already_dispatched* set this is
    always empty.
    """
    if already_dispatched:
        return []
    if verdict.missing_fraction <= config.round2_missing_threshold:
        return []
    next_index = _next_subtask_index(existing_ids)
    follow_ups: list[SubtaskSpec] = []
    for spec, rows in verdict.shortfall_specs:
        midpoint = spec.volume_midpoint
        remaining_lo = max(1, int(midpoint) - rows)
        remaining_hi = max(remaining_lo, spec.target_volume[1] - rows)
        follow_ups.append(
            SubtaskSpec(
                id=f"t{next_index}",
                instruction=(
                    f"Round 2: recover the missing rows for partition {spec.partition!r}; "
                    f"{rows} rows delivered so far against a midpoint of {midpoint:g}. "
                    f"Check the workboard for what peers already found."
                ),
                partition=spec.partition,
                schema=spec.schema,
                target_volume=(remaining_lo, remaining_hi),
                kind=SUBTASK_DATA,
            )
        )
        next_index += 1
    return follow_ups


def _next_subtask_index(existing_ids: list[str]) -> int:
    top = 0
    for sid in existing_ids:
        if sid.startswith("t") and sid[1:].isdigit():
            top = max(top, int(sid[1:]))
    return top + 1


# -- aggregation --------------------------------------------------------------

def _date_sort_key(raw: str):
    value = raw.strip()
    for fmt in ("%Y-%m-%d", "%Y/%m/%d", "%d %B %Y", "%B %d, %Y"):
        try:
            return (0, datetime.datetime.strptime(value, fmt).date().isoformat())
        except ValueError:
            continue
    return (1, value)


def aggregate(
    board: Workboard,
    specs: list[SubtaskSpec],
    query_schema: TableSchema,
    order_by: str | None = None,
) -> Table:
    """Concatenate data slots in subtask order, drop exact-duplicate rows.

    Audit slots hold findings, not rows, and are skipped. No summarisation or
    content rewriting happens here; every output row is byte-equal to some
    slot row. When *order_by* names a column, rows sort by it (dates parsed
    when possible, ties and non-dates by raw string), stably.
    """
    rows: list[tuple[Cell, ...]] = []
    seen: set[tuple[str, ...]] = set()
    parsed_any = False
    for spec in specs:
        if spec.kind != SUBTASK_DATA:
            continue
        content = board.slots.get(spec.id, "")
        if not content.strip():
            continue
        try:
            slot_table = parse_table(content, query_schema)
        except (NoTableFound, HeaderMismatch):
            continue
        parsed_any = True
        for row in slot_table.rows:
            key = tuple(c.raw.strip() for c in row)
            if key in seen:
                continue
            seen.add(key)
            rows.append(row)
    if not parsed_any or not rows:
        raise EmptyResult("every slot is empty or unparseable")

    if order_by is not None:
        try:
            col = [i for i, n in enumerate(query_schema.names)
                   if n.casefold() == order_by.casefold()][0]
        except IndexError:
            col = None
        if col is not None:
            rows.sort(key=lambda r: _date_sort_key(r[col].raw))
    return Table(schema=query_schema, rows=tuple(rows))


def detect_requested_order(query: Query, schema: TableSchema) -> str | None:
    """The ordering the query asks for, if any (e.g. chronological by date)."""
    text = query.text.casefold()
    if "chronological" in text or "by date" in text:
        for name, kind in schema.columns:
            if kind == "date":
                return name
    return None


# -- full inference pipeline ---------------------------------------------------

@dataclass
class InferenceSetup:
    """Everything one inference run needs besides the query itself."""

    orchestrator_backend: GenerationBackend
    worker_backend: GenerationBackend
    web_env: WebEnvironment
    orchestrator_config: OrchestratorConfig
    worker_config: WorkerConfig
    run_dir: Path
    schema: TableSchema | None = None
    clock: Clock = field(default_factory=SystemClock)
    resolve_config: ResolveConfig | None = None
    worker_bank: SkillBank | None = None
    remote_bank: SkillBank | None = None
    worker_creator: SkillCreator | None = None
    network_enabled: bool = False
    fallback_router_enabled: bool = True


@dataclass
class InferenceResult:
    table: Table
    board: Workboard
    specs: list[SubtaskSpec]
    trajectories: dict[str, Trajectory]
    verdict: VolumeVerdict
    strategy_label: str
    round2_dispatched: bool
    peak_active_workers: int


def _strategy_skill_for(label: str, bank: SkillBank | None) -> Skill:
    name = f"decompose-{label}"
    if bank is not None and bank.has(name):
        return bank.latest(name)
    # Cold start: a generic strategy body so decomposition can still run.
    return new_skill(
        name=name,
        kind="knowledge",
        description=f"builtin fallback decomposition for {label}",
        body=(
            f"# {label} decomposition\n"
            f"Partition the query along its {label.removeprefix('split-by-')} axis, "
            "one self-contained subtask per slice, each with an explicit partition "
            "descriptor and a target volume."
        ),
        created_by="fallback",
    )


def _board_context(query: Query, schema: TableSchema) -> str:
    cols = ", ".join(f"{name} ({kind})" for name, kind in schema.columns)
    return (
        f"Query: {query.text}\n"
        f"Target columns: {cols}\n"
        "Conventions: one Markdown pipe table per result slot; use \"NA\" for "
        "values that cannot be found; share useful sources and partial findings early."
    )


def run_inference(query: Query, setup: InferenceSetup) -> InferenceResult:
    """Alg.-style single forward pass: route, decompose, execute, validate, aggregate."""
    run_dir = Path(setup.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    schema = setup.schema or schema_from_query(query)
    ocfg = setup.orchestrator_config

    label = route_task(
        query, ocfg.strategy_bank,
        fallback_enabled=setup.fallback_router_enabled,
        resolve_config=setup.resolve_config,
    )
    strategy = _strategy_skill_for(label, ocfg.strategy_bank)
    specs = decompose(query, strategy, setup.orchestrator_backend, ocfg, schema=schema)

    board_path = run_dir / "board.md"
    init_workboard(specs, _board_context(query, schema), board_path)

    trajectories: dict[str, Trajectory] = {}
    round2_dispatched = False

    def worker_fn(spec: SubtaskSpec) -> WorkerResult:
        sandbox = Sandbox(run_dir / "sandboxes" / spec.id)
        wcfg = WorkerConfig(
            max_steps=setup.worker_config.max_steps,
            generation_timeout_s=setup.worker_config.generation_timeout_s,
            tool_timeout_s=setup.worker_config.tool_timeout_s,
            skill_bank=setup.worker_bank,
            workboard_path=board_path,
            max_consecutive_generation_timeouts=setup.worker_config.max_consecutive_generation_timeouts,
            observation_window=setup.worker_config.observation_window,
        )
        registry = build_registry(
            sandbox=sandbox,
            board_path=board_path,
            writer_id=spec.id,
            skill_bank=setup.worker_bank or ocfg.strategy_bank or _empty_bank(run_dir),
            web_env=setup.web_env,
            tool_timeout_s=wcfg.tool_timeout_s,
            resolve_config=setup.resolve_config,
            remote_bank=setup.remote_bank,
            network_enabled=setup.network_enabled,
        )
        return run_worker(
            spec, wcfg, registry, setup.worker_backend,
            sandbox=sandbox, clock=setup.clock,
            resolve_config=setup.resolve_config, creator=setup.worker_creator,
        )

    results, peak = run_worker_pool(specs, worker_fn, ocfg.max_workers)
    for sid, res in results.items():
        trajectories[sid] = res.trajectory

    board = read_workboard(board_path)
    verdict = validate_outputs(board, specs)

    follow_ups = trigger_round2(verdict, ocfg, [s.id for s in specs])
    all_specs = list(specs)
    if follow_ups:
        round2_dispatched = True
        add_subtasks(board_path, follow_ups, actor_id=ORCHESTRATOR_ACTOR)
        round2_results, peak2 = run_worker_pool(follow_ups, worker_fn, ocfg.max_workers)
        peak = max(peak, peak2)
        for sid, res in round2_results.items():
            trajectories[sid] = res.trajectory
        all_specs.extend(follow_ups)
        board = read_workboard(board_path)
        verdict = validate_outputs(board, all_specs)

    traj_dir = run_dir / "traj"
    for sid, traj in trajectories.items():
        write_trajectory_jsonl(traj, traj_dir / f"{sid}.jsonl")

    table = aggregate(board, all_specs, schema, order_by=detect_requested_order(query, schema))
    (run_dir / "output.md").write_text(render_table(table) + "\n", encoding="utf-8")

    return InferenceResult(
        table=table,
        board=board,
        specs=all_specs,
        trajectories=trajectories,
        verdict=verdict,
        strategy_label=label,
        round2_dispatched=round2_dispatched,
        peak_active_workers=peak,
    )


def _empty_bank(run_dir: Path) -> SkillBank:
    return SkillBank(run_dir / "empty-bank")
