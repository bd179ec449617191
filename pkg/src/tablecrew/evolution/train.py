"""The training loop: run each episode, verify against gold, consolidate skills.

Episodes run strictly sequentially; one bad episode becomes a zero-utility
record, never an abort. At the end both banks are frozen and returned.
"""
from __future__ import annotations

import json
import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from ..errors import ReflectionInvalid, TableCrewError
from ..orchestrator import InferenceResult, InferenceSetup, run_inference
from ..scoring.compare import ComparatorConfig
from ..scoring.metrics import score
from ..skills.bank import SkillBank, append_skill, new_skill
from ..tables import Query, Table, render_table
from ..trajectory import SubtaskSpec, Trajectory, load_trajectories
from ..workboard import Workboard, read_workboard
from .reflect import ReflectionOutput, cluster_queries, reflect
from .verify import DEFAULT_LOW_ACCURACY_THRESHOLD, ErrorReport, verify

logger = logging.getLogger(__name__)


@dataclass
class TrainingSetup:
    """Everything the loop needs besides the dataset and the banks."""

    make_inference_setup: Callable[[Query, Path], InferenceSetup]
    episodes_dir: Path
    reflect_backend: object | None = None
    digest_backend: object | None = None
    cluster_backend: object | None = None
    comparator: ComparatorConfig = field(default_factory=ComparatorConfig)
    low_accuracy_threshold: float = DEFAULT_LOW_ACCURACY_THRESHOLD
    reflect_retries: int = 2
    metrics_path: Path | None = None
    seed: int = 0


@dataclass
class EpisodeResult:
    table: Table | None
    board: Workboard | None
    trajectories: list[Trajectory]
    specs: list[SubtaskSpec]
    strategy_label: str
    utility: float
    inference: InferenceResult | None = None
    error: str | None = None


def run_episode(
    query: Query,
    gold: Table,
    banks: tuple[SkillBank, SkillBank],
    setup: TrainingSetup,
    episode_dir: Path,
) -> EpisodeResult:
    """One full inference pass with the current banks; failures yield zero utility."""
    episode_dir = Path(episode_dir)
    inference_setup = setup.make_inference_setup(query, episode_dir)
    try:
        result = run_inference(query, inference_setup)
    except (TableCrewError, ValueError) as exc:
        logger.warning("episode at %s failed: %s", episode_dir, exc)
        board = None
        board_path = episode_dir / "board.md"
        if board_path.exists():
            board = read_workboard(board_path)
        trajectories = []
        traj_dir = episode_dir / "traj"
        if traj_dir.exists():
            trajectories = load_trajectories(traj_dir)
        return EpisodeResult(
            table=None, board=board, trajectories=trajectories, specs=[],
            strategy_label="", utility=0.0, error=str(exc),
        )
    utility = score(result.table, gold, config=setup.comparator).item_f1
    return EpisodeResult(
        table=result.table,
        board=result.board,
        trajectories=list(result.trajectories.values()),
        specs=result.specs,
        strategy_label=result.strategy_label,
        utility=utility,
        inference=result,
    )


def _append_versioned(bank: SkillBank, name: str, kind: str, description: str,
                      body: str, created_by: str) -> None:
    version = bank.latest_version(name) + 1 if bank.has(name) else 1
    append_skill(bank, new_skill(
        name=name, kind=kind, description=description, body=body,
        created_by=created_by, version=version,
    ))


def consolidate(
    banks: tuple[SkillBank, SkillBank],
    reflection: ReflectionOutput,
    report: ErrorReport,
) -> tuple[SkillBank, SkillBank]:
    """Append reflection output to the strategy bank and execution advice to the worker bank.

    Both appends are monotone; an empty reflection leaves both banks unchanged.
    """
    orchestrator_bank, worker_bank = banks
    if reflection.is_empty:
        return banks

    for label, body in sorted(reflection.decomposition_skills.items()):
        _append_versioned(
            orchestrator_bank, f"decompose-{label}", "knowledge",
            f"decomposition strategy for {label} queries", body, "reflect",
        )
    if reflection.router_skill is not None:
        _append_versioned(
            orchestrator_bank, "task-router", "knowledge",
            "routes queries to decomposition strategies by structural signals",
            reflection.router_skill, "reflect",
        )

    # Worker-facing advice: only sources and query formulations that co-occur
    # with delivered rows survive.
    sources: list[str] = []
    queries: list[str] = []
    for digest in report.digests:
        if digest.coverage_stats.get("rows_delivered", 0) > 0:
            sources.extend(u for u in digest.sources_fetched if u not in sources)
            queries.extend(q for q in digest.queries_issued if q not in queries)
    if sources or queries:
        lines = ["# Execution advice from completed episodes", ""]
        if sources:
            lines.append("Sources that delivered rows:")
            lines.extend(f"- {u}" for u in sources)
            lines.append("")
        if queries:
            lines.append("Query formulations that delivered rows:")
            lines.extend(f"- {q}" for q in queries)
            lines.append("")
        lines.append("Format: one Markdown pipe table per result slot; \"NA\" for unknown cells.")
        _append_versioned(
            worker_bank, "execution-advice", "knowledge",
            "sources and query formulations that previously delivered rows",
            "\n".join(lines), "reflect",
        )
    return banks


def train(
    dataset: Sequence[tuple[Query, Table | None]],
    banks: tuple[SkillBank, SkillBank],
    setup: TrainingSetup,
) -> tuple[SkillBank, SkillBank]:
    """Process episodes sequentially, log per-episode utility, freeze the banks.

    An entry whose gold table is None (for example, it failed to parse) is
    logged as a zero-utility episode and the run continues.
    """
    if not dataset:
        raise ValueError("dataset must be non-empty")
    orchestrator_bank, worker_bank = banks
    episodes_dir = Path(setup.episodes_dir)
    episodes_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = setup.metrics_path or (episodes_dir / "metrics.jsonl")
    records: list[dict] = []

    for k, (query, gold) in enumerate(dataset):
        if gold is None:
            logger.warning("episode %d skipped: gold table missing or unparseable", k)
            records.append({
                "episode": k, "utility": 0.0, "success": False,
                "row_f1": 0.0, "item_f1": 0.0, "strategy": "",
                "error": "gold table missing or unparseable",
            })
            continue
        episode_dir = episodes_dir / str(k)
        if episode_dir.exists():
            shutil.rmtree(episode_dir)
        episode_dir.mkdir(parents=True)

        result = run_episode(query, gold, banks, setup, episode_dir)
        (episode_dir / "gold.md").write_text(render_table(gold) + "\n", encoding="utf-8")

        report = verify(
            result.table, gold, result.trajectories,
            setup.digest_backend,
            episode_id=str(k),
            board=result.board,
            specs=result.specs,
            strategy_label=result.strategy_label,
            comparator=setup.comparator,
            low_accuracy_threshold=setup.low_accuracy_threshold,
        )
        (episode_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")

        reflection = ReflectionOutput.empty()
        if report.has_findings and setup.reflect_backend is not None:
            try:
                clusters = cluster_queries([query.text], backend=setup.cluster_backend)
                reflection = reflect(clusters, [report], setup.reflect_backend,
                                     retries=setup.reflect_retries)
            except ReflectionInvalid as exc:
                logger.warning("episode %d reflection rejected: %s", k, exc)
        consolidate(banks, reflection, report)

        records.append({
            "episode": k,
            "utility": report.utility,
            "success": bool(report.score_report.success) if report.score_report else False,
            "row_f1": report.score_report.row_f1 if report.score_report else 0.0,
            "item_f1": report.score_report.item_f1 if report.score_report else 0.0,
            "strategy": result.strategy_label,
            "error": result.error,
        })

    metrics_path.parent.mkdir(parents=True, exist_ok=True)
    with open(metrics_path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")

    orchestrator_bank.freeze()
    worker_bank.freeze()
    return orchestrator_bank, worker_bank
