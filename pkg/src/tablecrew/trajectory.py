"""Subtask specifications and per-worker action histories persisted as JSONL."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .tables import TableSchema

DEFAULT_TARGET_VOLUME = (10, 20)

ANOMALY_KINDS = frozenset(
    {"context_truncation", "tool_timeout", "generation_timeout", "step_exhaustion"}
)

#: Subtask kinds: data subtasks deliver rows; audit subtasks (gap detection,
#: cross-source verification) deliver findings and carry a zero target volume.
SUBTASK_DATA = "data"
SUBTASK_AUDIT = "audit"


@dataclass(frozen=True)
class SubtaskSpec:
    """One orchestrator-issued unit of work, scoped to a data partition."""

    id: str
    instruction: str
    partition: str
    schema: TableSchema
    target_volume: tuple[int, int] = DEFAULT_TARGET_VOLUME
    kind: str = SUBTASK_DATA

    def __post_init__(self):
        if not self.id or not self.id.replace("_", "").isalnum():
            raise ValueError(f"subtask id {self.id!r} is not tag-safe")
        lo, hi = self.target_volume
        if lo > hi or lo < 0:
            raise ValueError(f"invalid target volume {self.target_volume}")
        if self.kind not in (SUBTASK_DATA, SUBTASK_AUDIT):
            raise ValueError(f"unknown subtask kind {self.kind!r}")

    @property
    def volume_midpoint(self) -> float:
        lo, hi = self.target_volume
        return (lo + hi) / 2


def digest_observation(observation: str) -> str:
    return "sha256:" + hashlib.sha256(observation.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class TrajectoryStep:
    """A single action: a tool call with its observation, or a terminal response."""

    index: int
    ts: float
    kind: str  # "tool_call" | "response"
    tool: str | None = None
    args: dict[str, Any] | None = None
    obs_digest: str | None = None
    latency_ms: float = 0.0

    def to_record(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "ts": self.ts,
            "kind": self.kind,
            "tool": self.tool,
            "args": self.args,
            "obs_digest": self.obs_digest,
            "latency_ms": self.latency_ms,
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "TrajectoryStep":
        return cls(
            index=rec["index"],
            ts=rec["ts"],
            kind=rec["kind"],
            tool=rec.get("tool"),
            args=rec.get("args"),
            obs_digest=rec.get("obs_digest"),
            latency_ms=rec.get("latency_ms", 0.0),
        )


@dataclass(frozen=True)
class Anomaly:
    kind: str
    step_index: int
    detail: str = ""

    def __post_init__(self):
        if self.kind not in ANOMALY_KINDS:
            raise ValueError(f"unknown anomaly kind {self.kind!r}")


@dataclass
class Trajectory:
    """Ordered action history of one worker, plus recorded anomalies."""

    worker_id: str
    steps: list[TrajectoryStep] = field(default_factory=list)
    anomalies: list[Anomaly] = field(default_factory=list)

    def append(self, step: TrajectoryStep) -> None:
        if self.steps and step.index <= self.steps[-1].index:
            raise ValueError("step indices must be strictly increasing")
        self.steps.append(step)

    def record_anomaly(self, kind: str, step_index: int, detail: str = "") -> None:
        self.anomalies.append(Anomaly(kind=kind, step_index=step_index, detail=detail))

    @property
    def terminated_normally(self) -> bool:
        return bool(self.steps) and self.steps[-1].kind == "response"

    def search_queries(self) -> list[str]:
        out = []
        for s in self.steps:
            if s.kind == "tool_call" and s.tool == "search" and s.args:
                q = s.args.get("query")
                if q:
                    out.append(q)
        return out


def write_trajectory_jsonl(trajectory: Trajectory, path: Path) -> None:
    """One JSON object per step; anomalies and identity go to a sidecar file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for step in trajectory.steps:
            f.write(json.dumps(step.to_record(), ensure_ascii=False) + "\n")
    meta = {
        "worker_id": trajectory.worker_id,
        "anomalies": [
            {"kind": a.kind, "step_index": a.step_index, "detail": a.detail}
            for a in trajectory.anomalies
        ],
    }
    path.with_suffix(".meta.json").write_text(
        json.dumps(meta, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def read_trajectory_jsonl(path: Path) -> Trajectory:
    steps = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                steps.append(TrajectoryStep.from_record(json.loads(line)))
    worker_id = path.stem
    anomalies: list[Anomaly] = []
    meta_path = path.with_suffix(".meta.json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        worker_id = meta.get("worker_id", worker_id)
        anomalies = [
            Anomaly(kind=a["kind"], step_index=a["step_index"], detail=a.get("detail", ""))
            for a in meta.get("anomalies", [])
        ]
    traj = Trajectory(worker_id=worker_id)
    for s in steps:
        traj.append(s)
    traj.anomalies = anomalies
    return traj


def load_trajectories(traj_dir: Path) -> list[Trajectory]:
    out = []
    for p in sorted(traj_dir.glob("*.jsonl")):
        out.append(read_trajectory_jsonl(p))
    return out


def iter_steps(trajectories: Iterable[Trajectory]) -> Iterable[tuple[str, TrajectoryStep]]:
    for t in trajectories:
        for s in t.steps:
            yield t.worker_id, s
