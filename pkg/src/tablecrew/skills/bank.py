"""Directory-backed skill store with monotone-append persistence.

Layout: one directory per skill name; ``SKILL.md`` holds the latest version
and ``SKILL.v{n}.md`` holds each prior. Entries are never deleted or mutated
in place, so the set of (name, version, content-hash) triples only grows.
Appends serialise through ``<root>/.lock``; a ``.frozen`` marker makes the
bank read-only.
"""
from __future__ import annotations

import hashlib
from pathlib import Path

from ..errors import BankFrozen, UnknownSkill, VersionConflict
from ..locking import atomic_write_text, exclusive_lock
from .embedding import EmbeddingProvider, HashedNgramEmbedding, VectorIndex
from .lexical import DEFAULT_B, DEFAULT_K1, Bm25Index
from .model import Skill, parse_skill_document, render_skill_document, validate_skill

FROZEN_MARKER = ".frozen"
LATEST_FILE = "SKILL.md"


def _content_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class SkillBank:
    """A skill store rooted at a directory, with lexical + vector indexes."""

    def __init__(
        self,
        root: Path,
        embedding: EmbeddingProvider | None = None,
        k1: float = DEFAULT_K1,
        b: float = DEFAULT_B,
        script_validator=None,
    ):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.embedding = embedding or HashedNgramEmbedding()
        self.script_validator = script_validator
        self._bm25 = Bm25Index(k1=k1, b=b)
        self._vectors = VectorIndex(self.embedding)
        self._latest: dict[str, Skill] = {}
        self.refresh()

    # -- persistence --------------------------------------------------------

    @property
    def lock_path(self) -> Path:
        return self.root / ".lock"

    @property
    def frozen(self) -> bool:
        return (self.root / FROZEN_MARKER).exists()

    def freeze(self) -> None:
        (self.root / FROZEN_MARKER).write_text("frozen\n", encoding="utf-8")

    def refresh(self) -> None:
        """Rescan the directory and rebuild both retrieval indexes."""
        latest: dict[str, Skill] = {}
        for skill_dir in sorted(self.root.iterdir() if self.root.exists() else []):
            doc = skill_dir / LATEST_FILE
            if skill_dir.is_dir() and doc.exists():
                skill = parse_skill_document(doc.read_text(encoding="utf-8"))
                latest[skill.name] = skill
        self._latest = latest
        docs = {
            name: f"{name}\n{s.description}\n{s.body}" for name, s in latest.items()
        }
        self._bm25.build(docs)
        self._vectors.build(docs)

    def names(self) -> list[str]:
        return sorted(self._latest)

    def has(self, name: str) -> bool:
        return name in self._latest

    def latest(self, name: str) -> Skill:
        if name not in self._latest:
            raise UnknownSkill(name)
        return self._latest[name]

    def get_version(self, name: str, version: int) -> Skill:
        skill_dir = self.root / name
        latest = self.latest(name)
        if version == latest.version:
            return latest
        path = skill_dir / f"SKILL.v{version}.md"
        if not path.exists():
            raise UnknownSkill(f"{name} v{version}")
        return parse_skill_document(path.read_text(encoding="utf-8"))

    def latest_version(self, name: str) -> int:
        return self.latest(name).version

    def snapshot(self) -> set[tuple[str, int, str]]:
        """All committed (name, version, content-hash) triples."""
        triples: set[tuple[str, int, str]] = set()
        if not self.root.exists():
            return triples
        for skill_dir in self.root.iterdir():
            if not skill_dir.is_dir():
                continue
            for doc in skill_dir.glob("SKILL*.md"):
                text = doc.read_text(encoding="utf-8")
                skill = parse_skill_document(text)
                triples.add((skill.name, skill.version, _content_hash(text)))
        return triples

    def content_hash(self) -> str:
        """One hash over every committed document, for whole-bank comparison."""
        parts = sorted(
            f"{name}:{version}:{digest}" for name, version, digest in self.snapshot()
        )
        return _content_hash("\n".join(parts))

    # -- retrieval ----------------------------------------------------------

    def bm25_top_n(self, query: str, n: int) -> list[tuple[str, float]]:
        return self._bm25.top_n(query, n)

    def vector_top_n(self, query: str, n: int) -> list[tuple[str, float]]:
        return self._vectors.top_n(query, n)


def append_skill(bank: SkillBank, skill: Skill) -> Skill:
    """Write a new skill (or new version) to disk; indexes refresh before return.

    Monotone: a new name must be version 1; an existing name must be exactly
    latest + 1. Prior version files are never touched.
    """
    if bank.frozen:
        raise BankFrozen(f"bank at {bank.root} is frozen")
    validate_skill(skill, script_validator=bank.script_validator)
    with exclusive_lock(bank.lock_path):
        bank.refresh()
        skill_dir = bank.root / skill.name
        if bank.has(skill.name):
            current = bank.latest(skill.name)
            if skill.version != current.version + 1:
                raise VersionConflict(
                    f"{skill.name}: next version must be {current.version + 1}, got {skill.version}"
                )
            prior_path = skill_dir / f"SKILL.v{current.version}.md"
            if not prior_path.exists():
                atomic_write_text(prior_path, render_skill_document(current))
        else:
            if skill.version != 1:
                raise VersionConflict(f"new skill {skill.name} must start at version 1")
            if skill_dir.exists() and (skill_dir / LATEST_FILE).exists():
                raise VersionConflict(f"{skill.name} already on disk")
        atomic_write_text(skill_dir / LATEST_FILE, render_skill_document(skill))
        bank.refresh()
    return skill


def new_skill(
    name: str,
    kind: str,
    description: str,
    body: str,
    created_by: str,
    version: int = 1,
    entry: str | None = None,
    args: list[str] | None = None,
) -> Skill:
    fm: dict = {
        "name": name,
        "kind": kind,
        "description": description,
        "version": version,
        "created_by": created_by,
    }
    if entry is not None:
        fm["entry"] = entry
    if args is not None:
        fm["args"] = list(args)
    return Skill(
        name=name, kind=kind, description=description, version=version,
        body=body, frontmatter=fm,
    )


