"""Verify stage: score the episode against gold and assemble the error report.

Gold data enters the pipeline only here; nothing in the report feeds back
into worker prompts within the same episode.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from ..scoring.compare import ComparatorConfig
from ..scoring.metrics import ScoreReport, score
from ..tables import Table
from ..trajectory import SubtaskSpec, Trajectory
from ..workboard import Workboard
from .digests import TrajectoryDigest, digest_trajectory

DEFAULT_LOW_ACCURACY_THRESHOLD = 0.8


@dataclass
class ErrorReport:
    episode_id: str
    utility: float
    missing_row_categories: dict[str, list[int]]
    low_accuracy_columns: list[str]
    trajectory_anomalies: list[dict]
    digests: list[TrajectoryDigest] = field(default_factory=list)
    score_report: ScoreReport | None = None

    def __post_init__(self):
        if not (0.0 <= self.utility <= 1.0):
            raise ValueError("utility must lie in [0, 1]")

    def to_dict(self) -> dict:
        return {
            "episode_id": self.episode_id,
            "utility": self.utility,
            "missing_row_categories": self.missing_row_categories,
            "low_accuracy_columns": self.low_accuracy_columns,
            "trajectory_anomalies": self.trajectory_anomalies,
            "digests": [d.to_dict() for d in self.digests],
            "score": self.score_report.to_dict() if self.score_report else None,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), ensure_ascii=False, indent=2)

    @property
    def has_findings(self) -> bool:
        return bool(
            self.utility < 1.0
            or self.missing_row_categories
            or self.low_accuracy_columns
            or self.trajectory_anomalies
        )


def partition_categorizer(specs: Sequence[SubtaskSpec]):
    """Map a gold row to the data partition whose descriptor it best satisfies.

    Descriptor parts (split on "/") are matched as case-folded substrings of
    the row text; the partition with the most matching parts wins, earliest
    spec breaking ties. Rows matching nothing go to "uncategorized".
    """
    parts_by_spec = [
        (s.partition, [p.strip().casefold() for p in s.partition.split("/") if p.strip()])
        for s in specs
        if s.kind == "data"
    ]

    def categorize(row_values: Sequence[str]) -> str:
        haystack = " ".join(row_values).casefold()
        best_label = "uncategorized"
        best_hits = 0
        for label, parts in parts_by_spec:
            hits = sum(1 for p in parts if p and p in haystack)
            if hits > best_hits:
                best_hits = hits
                best_label = label
        return best_label

    return categorize


def verify(
    output: Table | None,
    gold: Table,
    trajectories: Sequence[Trajectory],
    digest_backend=None,
    *,
    episode_id: str = "episode",
    board: Workboard | None = None,
    specs: Sequence[SubtaskSpec] | None = None,
    strategy_label: str = "",
    comparator: ComparatorConfig | None = None,
    low_accuracy_threshold: float = DEFAULT_LOW_ACCURACY_THRESHOLD,
) -> ErrorReport:
    """Score cell-by-cell and distil digests, gaps, and anomalies into one report."""
    specs = list(specs or [])
    spec_by_id = {s.id: s for s in specs}

    if output is None:
        output = Table(schema=gold.schema, rows=())
    report = score(
        output, gold, config=comparator,
        row_categorizer=partition_categorizer(specs) if specs else None,
    )

    low_cols = [
        name for name, acc in report.per_column_accuracy.items()
        if acc < low_accuracy_threshold
    ]

    anomalies = []
    for traj in trajectories:
        for a in traj.anomalies:
            anomalies.append({
                "worker_id": traj.worker_id,
                "kind": a.kind,
                "step_index": a.step_index,
                "detail": a.detail,
            })

    digests = []
    for traj in trajectories:
        spec = spec_by_id.get(traj.worker_id)
        rows_delivered = 0
        if board is not None and spec is not None:
            from ..orchestrator import _slot_row_count

            rows_delivered = _slot_row_count(board, spec)
        digests.append(
            digest_trajectory(traj, spec, strategy_label, rows_delivered, backend=digest_backend)
        )

    return ErrorReport(
        episode_id=episode_id,
        utility=report.item_f1,
        missing_row_categories=report.missing_row_categories,
        low_accuracy_columns=low_cols,
        trajectory_anomalies=anomalies,
        digests=digests,
        score_report=report,
    )
