"""The shared per-episode workboard: one Markdown document, lock-protected writes.

The document has exactly three sections in fixed order: a task checklist, a
shared context block written once at init, and tag-partitioned worker result
slots. The grammar is bit-exact so region isolation is byte-testable: any
committed write changes only the writer's own region.

Writers serialise through an exclusive flock on ``<board>.lock`` and commit by
atomic rename; readers never take the lock and always see the last committed
version.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .errors import MalformedBoard, NotAuthorized, PathExists, SlotNotOwned
from .locking import DEFAULT_LOCK_WAIT_S, atomic_write_text, exclusive_lock
from .trajectory import SubtaskSpec

STATUSES = ("pending", "running", "done", "failed")
TERMINAL_STATUSES = frozenset({"done", "failed"})

#: Actor id with authority over every checklist line.
ORCHESTRATOR_ACTOR = "orchestrator"

_CHECKLIST_RE = re.compile(
    r"^- \[(x| )\] ([A-Za-z0-9_]+): (.*) \(status: (pending|running|done|failed)\)$"
)
_HEADINGS = ("# Workboard", "## Task Checklist", "## Shared Context", "## Worker Results")


@dataclass(frozen=True)
class ChecklistEntry:
    subtask_id: str
    summary: str
    status: str


@dataclass(frozen=True)
class Workboard:
    """Immutable snapshot of the board document."""

    entries: tuple[ChecklistEntry, ...]
    shared_context: str
    slots: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "slots", MappingProxyType(dict(self.slots)))
        ids = [e.subtask_id for e in self.entries]
        if sorted(ids) != sorted(self.slots.keys()):
            raise MalformedBoard("slot keys must equal checklist subtask ids")

    def slot(self, subtask_id: str) -> str:
        return self.slots[subtask_id]

    def status_of(self, subtask_id: str) -> str:
        for e in self.entries:
            if e.subtask_id == subtask_id:
                return e.status
        raise KeyError(subtask_id)


def render_board(board: Workboard) -> str:
    parts = ["# Workboard\n", "\n", "## Task Checklist\n"]
    for e in board.entries:
        mark = "x" if e.status == "done" else " "
        parts.append(f"- [{mark}] {e.subtask_id}: {e.summary} (status: {e.status})\n")
    parts.append("\n## Shared Context\n")
    parts.append(board.shared_context + "\n")
    parts.append("\n## Worker Results\n")
    for e in board.entries:
        content = board.slots[e.subtask_id]
        parts.append(f"<{e.subtask_id}_result>\n{content}\n</{e.subtask_id}_result>\n")
    return "".join(parts)


def parse_board(text: str) -> Workboard:
    """Inverse of :func:`render_board`; raises MalformedBoard on any deviation.

    Section scanning anchors on the board's own headings, so Markdown
    headings inside the shared context or slot payloads do not confuse it.
    """
    prefix = "# Workboard\n\n## Task Checklist\n"
    if not text.startswith(prefix):
        raise MalformedBoard("missing board header or checklist heading")
    pos = len(prefix)

    entries: list[ChecklistEntry] = []
    while True:
        nl = text.find("\n", pos)
        if nl == -1:
            raise MalformedBoard("checklist section not terminated")
        line = text[pos:nl]
        if line == "":
            pos = nl + 1
            break
        m = _CHECKLIST_RE.match(line)
        if not m:
            raise MalformedBoard(f"bad checklist line: {line!r}")
        mark, sid, summary, status = m.groups()
        expected_mark = "x" if status == "done" else " "
        if mark != expected_mark:
            raise MalformedBoard(f"checkbox mark inconsistent with status on {sid!r}")
        entries.append(ChecklistEntry(subtask_id=sid, summary=summary, status=status))
        pos = nl + 1
    if not entries:
        raise MalformedBoard("empty checklist")

    ctx_heading = "## Shared Context\n"
    if not text.startswith(ctx_heading, pos):
        raise MalformedBoard("missing shared context heading")
    pos += len(ctx_heading)

    results_marker = "\n\n## Worker Results\n"
    marker_at = text.find(results_marker, pos)
    if marker_at == -1:
        raise MalformedBoard("missing worker results heading")
    shared_context = text[pos:marker_at]
    pos = marker_at + len(results_marker)

    slots: dict[str, str] = {}
    for e in entries:
        open_tag = f"<{e.subtask_id}_result>\n"
        if not text.startswith(open_tag, pos):
            raise MalformedBoard(f"missing open tag for slot {e.subtask_id!r}")
        pos += len(open_tag)
        close_tag = f"\n</{e.subtask_id}_result>\n"
        close_at = text.find(close_tag, pos)
        if close_at == -1:
            raise MalformedBoard(f"missing close tag for slot {e.subtask_id!r}")
        slots[e.subtask_id] = text[pos:close_at]
        pos = close_at + len(close_tag)
    if pos != len(text):
        raise MalformedBoard("trailing content after last slot")

    return Workboard(entries=tuple(entries), shared_context=shared_context, slots=slots)


def _summary_line(instruction: str, limit: int = 120) -> str:
    squeezed = " ".join(instruction.split())
    return squeezed[:limit]


def _check_context(context: str) -> None:
    for heading in _HEADINGS:
        if re.search(rf"(?m)^{re.escape(heading)}$", context):
            raise ValueError(
                f"shared context may not contain the board heading line {heading!r}"
            )


def init_workboard(subtasks: list[SubtaskSpec], context: str, path: Path) -> Workboard:
    """Create the board file with pending statuses and empty slots."""
    if not subtasks:
        raise ValueError("decomposition must be non-empty")
    ids = [s.id for s in subtasks]
    if len(set(ids)) != len(ids):
        raise ValueError("subtask ids must be unique")
    _check_context(context)
    path = Path(path)
    if path.exists():
        raise PathExists(f"workboard already exists at {path}")
    board = Workboard(
        entries=tuple(
            ChecklistEntry(subtask_id=s.id, summary=_summary_line(s.instruction), status="pending")
            for s in subtasks
        ),
        shared_context=context,
        slots={s.id: "" for s in subtasks},
    )
    with exclusive_lock(_lock_path(path)):
        if path.exists():
            raise PathExists(f"workboard already exists at {path}")
        atomic_write_text(path, render_board(board))
    return board


def read_workboard(path: Path) -> Workboard:
    """Parse the last committed board version; never blocks on the writer lock."""
    return parse_board(Path(path).read_text(encoding="utf-8"))


def _lock_path(path: Path) -> Path:
    return Path(str(path) + ".lock")


def _commit(path: Path, board: Workboard) -> None:
    atomic_write_text(Path(path), render_board(board))


def edit_slot(
    path: Path,
    writer_id: str,
    payload: str,
    mode: str = "append",
    lock_wait_s: float = DEFAULT_LOCK_WAIT_S,
) -> Workboard:
    """Change only the region between *writer_id*'s tags; commit atomically."""
    if mode not in ("append", "replace"):
        raise ValueError(f"unknown mode {mode!r}")
    if f"</{writer_id}_result>" in payload:
        raise ValueError("payload may not contain the slot's own close tag")
    path = Path(path)
    with exclusive_lock(_lock_path(path), wait_s=lock_wait_s):
        board = read_workboard(path)
        if writer_id not in board.slots:
            raise SlotNotOwned(f"{writer_id!r} has no slot on this board")
        current = board.slots[writer_id]
        if mode == "replace" or not current:
            new_content = payload
        else:
            new_content = current + "\n" + payload
        slots = dict(board.slots)
        slots[writer_id] = new_content
        updated = Workboard(entries=board.entries, shared_context=board.shared_context, slots=slots)
        _commit(path, updated)
    return updated


def set_status(
    path: Path,
    subtask_id: str,
    status: str,
    actor_id: str,
    lock_wait_s: float = DEFAULT_LOCK_WAIT_S,
) -> Workboard:
    """Update exactly one checklist line, under the same lock discipline."""
    if status not in STATUSES:
        raise ValueError(f"unknown status {status!r}")
    if actor_id != subtask_id and actor_id != ORCHESTRATOR_ACTOR:
        raise NotAuthorized(f"{actor_id!r} may not change the status of {subtask_id!r}")
    path = Path(path)
    with exclusive_lock(_lock_path(path), wait_s=lock_wait_s):
        board = read_workboard(path)
        if subtask_id not in board.slots:
            raise SlotNotOwned(f"{subtask_id!r} has no checklist line")
        entries = tuple(
            ChecklistEntry(e.subtask_id, e.summary, status) if e.subtask_id == subtask_id else e
            for e in board.entries
        )
        updated = Workboard(entries=entries, shared_context=board.shared_context, slots=board.slots)
        _commit(path, updated)
    return updated


def add_subtasks(
    path: Path,
    subtasks: list[SubtaskSpec],
    actor_id: str,
    lock_wait_s: float = DEFAULT_LOCK_WAIT_S,
) -> Workboard:
    """Append checklist lines and empty slots for follow-up subtasks (orchestrator only)."""
    if actor_id != ORCHESTRATOR_ACTOR:
        raise NotAuthorized("only the orchestrator may add subtasks")
    path = Path(path)
    with exclusive_lock(_lock_path(path), wait_s=lock_wait_s):
        board = read_workboard(path)
        for s in subtasks:
            if s.id in board.slots:
                raise ValueError(f"subtask id {s.id!r} already on board")
        entries = board.entries + tuple(
            ChecklistEntry(subtask_id=s.id, summary=_summary_line(s.instruction), status="pending")
            for s in subtasks
        )
        slots = dict(board.slots)
        slots.update({s.id: "" for s in subtasks})
        updated = Workboard(entries=entries, shared_context=board.shared_context, slots=slots)
        _commit(path, updated)
    return updated


def merge_step(board_before: Workboard, contributions: Mapping[str, str]) -> Workboard:
    """Apply per-worker slot appends; order-independent over distinct slots."""
    unknown = set(contributions) - set(board_before.slots)
    if unknown:
        raise SlotNotOwned(f"contributions target unknown slots {sorted(unknown)}")
    slots = dict(board_before.slots)
    for writer_id, payload in contributions.items():
        current = slots[writer_id]
        slots[writer_id] = payload if not current else current + "\n" + payload
    return Workboard(
        entries=board_before.entries,
        shared_context=board_before.shared_context,
        slots=slots,
    )


def is_converged(board: Workboard) -> bool:
    """True iff every checklist status is terminal (done or failed)."""
    return all(e.status in TERMINAL_STATUSES for e in board.entries)
