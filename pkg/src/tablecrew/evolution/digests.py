"""Per-worker trajectory digests: the raw material for reflection.

Digests derive only from the trajectory and board, never from gold data. A
scripted digest backend may compress the steps; the deterministic fallback
extracts the same fields mechanically.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

from ..backends import extract_json_payload
from ..prompting import load_prompt, render_prompt
from ..trajectory import SubtaskSpec, Trajectory

logger = logging.getLogger(__name__)


@dataclass
class TrajectoryDigest:
    worker_id: str
    strategy_applied: str
    queries_issued: list[str] = field(default_factory=list)
    sources_fetched: list[str] = field(default_factory=list)
    failure_points: list[str] = field(default_factory=list)
    coverage_stats: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "worker_id": self.worker_id,
            "strategy_applied": self.strategy_applied,
            "queries_issued": self.queries_issued,
            "sources_fetched": self.sources_fetched,
            "failure_points": self.failure_points,
            "coverage_stats": self.coverage_stats,
        }


def _mechanical_digest(
    trajectory: Trajectory,
    spec: SubtaskSpec | None,
    strategy_label: str,
    rows_delivered: int,
) -> TrajectoryDigest:
    queries = trajectory.search_queries()
    sources = [
        s.args.get("url", "")
        for s in trajectory.steps
        if s.kind == "tool_call" and s.tool == "fetch" and s.args
    ]
    failures = [f"{a.kind}@step{a.step_index}: {a.detail}" for a in trajectory.anomalies]
    midpoint = spec.volume_midpoint if spec else 0.0
    return TrajectoryDigest(
        worker_id=trajectory.worker_id,
        strategy_applied=strategy_label,
        queries_issued=queries,
        sources_fetched=[s for s in sources if s],
        failure_points=failures,
        coverage_stats={"rows_delivered": rows_delivered, "target_midpoint": midpoint},
    )


def digest_trajectory(
    trajectory: Trajectory,
    spec: SubtaskSpec | None,
    strategy_label: str,
    rows_delivered: int,
    backend=None,
) -> TrajectoryDigest:
    """Compress one trajectory; fall back to the mechanical digest on backend trouble."""
    mechanical = _mechanical_digest(trajectory, spec, strategy_label, rows_delivered)
    if backend is None:
        return mechanical
    steps_text = "\n".join(
        json.dumps(s.to_record(), ensure_ascii=False) for s in trajectory.steps
    )
    prompt = render_prompt(
        load_prompt("trajectory_digest"),
        worker_id=trajectory.worker_id,
        strategy=strategy_label,
        steps=steps_text,
    )
    try:
        text = backend.generate(prompt, max_tokens=1024, temperature=0.0, timeout_s=120.0)
        payload = extract_json_payload(text)
    except Exception as exc:
        logger.warning("digest backend failed for %s: %s", trajectory.worker_id, exc)
        return mechanical
    if not isinstance(payload, dict):
        return mechanical
    return TrajectoryDigest(
        worker_id=trajectory.worker_id,
        strategy_applied=str(payload.get("strategy_applied", strategy_label)),
        queries_issued=[str(q) for q in payload.get("queries_issued", mechanical.queries_issued)],
        sources_fetched=[str(u) for u in payload.get("sources_fetched", mechanical.sources_fetched)],
        failure_points=[str(f) for f in payload.get("failure_points", mechanical.failure_points)],
        coverage_stats=payload.get("coverage_stats", mechanical.coverage_stats),
    )
