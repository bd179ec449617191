"""Strictly prioritised skill resolution, synthesis, repair, and evolution.

Resolution order: exact case-folded name match in the local bank, then hybrid
lexical+vector retrieval across the local bank and an optional read-only
remote tier (RRF-fused, optionally cross-scored), then on-demand synthesis
when a creator is configured.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

from ..errors import (
    CompatibilityBroken,
    NotResolvable,
    RepairFailed,
    SynthesisFailed,
    SyntaxInvalid,
    UnknownSkill,
)
from ..prompting import load_prompt, render_prompt
from .bank import SkillBank, append_skill
from .embedding import VectorIndex
from .fusion import DEFAULT_RRF_K, rrf_fuse
from .lexical import Bm25Index, tokenize
from .model import Skill, parse_skill_document, validate_skill

logger = logging.getLogger(__name__)

DEFAULT_RESOLVE_THRESHOLD = 0.016
DEFAULT_TOP_N = 5


class CrossScorer(Protocol):
    def score(self, query: str, doc_text: str) -> float: ...


class LexicalOverlapScorer:
    """Deterministic stand-in reranker: fraction of query tokens present in the doc."""

    def score(self, query: str, doc_text: str) -> float:
        q = set(tokenize(query))
        if not q:
            return 0.0
        d = set(tokenize(doc_text))
        return len(q & d) / len(q)


@dataclass
class ResolveConfig:
    top_n: int = DEFAULT_TOP_N
    threshold: float = DEFAULT_RESOLVE_THRESHOLD
    rrf_k: int = DEFAULT_RRF_K
    cross_scorer: CrossScorer | None = None


@dataclass
class SkillCreator:
    """On-demand synthesis of a new skill via a generation backend."""

    backend: "object"
    kind: str = "knowledge"
    retries: int = 2
    max_tokens: int = 2048

    def synthesise(self, spec_text: str, kind: str | None, bank: SkillBank) -> Skill:
        return create_skill(spec_text, kind or self.kind, self.backend,
                            retries=self.retries, bank=bank,
                            script_validator=bank.script_validator)


def _doc_text(skill: Skill) -> str:
    return f"{skill.name}\n{skill.description}\n{skill.body}"


def _hybrid_rankings(
    bank: SkillBank,
    remote: SkillBank | None,
    query: str,
    top_n: int,
) -> tuple[list[str], list[str], dict[str, Skill]]:
    if remote is None:
        candidates = {name: bank.latest(name) for name in bank.names()}
        bm25 = [k for k, _ in bank.bm25_top_n(query, top_n)]
        vectors = [k for k, _ in bank.vector_top_n(query, top_n)]
        return bm25, vectors, candidates
    # Union corpus with local shadowing remote on name collisions, indexed
    # fresh so scores are comparable across tiers.
    candidates = {name: remote.latest(name) for name in remote.names()}
    candidates.update({name: bank.latest(name) for name in bank.names()})
    docs = {name: _doc_text(s) for name, s in candidates.items()}
    bm25_index = Bm25Index(k1=bank._bm25.k1, b=bank._bm25.b)
    bm25_index.build(docs)
    vec_index = VectorIndex(bank.embedding)
    vec_index.build(docs)
    bm25 = [k for k, _ in bm25_index.top_n(query, top_n)]
    vectors = [k for k, _ in vec_index.top_n(query, top_n)]
    return bm25, vectors, candidates


def resolve_skill(
    bank: SkillBank,
    capability_query: str,
    creator: SkillCreator | None = None,
    config: ResolveConfig | None = None,
    remote: SkillBank | None = None,
) -> Skill:
    """Resolve a capability to a skill through the prioritised stage chain."""
    config = config or ResolveConfig()
    bank.refresh()

    # Stage 1: exact case-folded name match (local only); retrieval never runs.
    wanted = capability_query.strip().casefold()
    for name in bank.names():
        if name.casefold() == wanted:
            return bank.latest(name)

    # Stage 2: hybrid retrieval, RRF-fused, optional cross-scorer rerank.
    if remote is not None:
        remote.refresh()
    bm25, vectors, candidates = _hybrid_rankings(bank, remote, capability_query, config.top_n)
    fused = rrf_fuse([r for r in (bm25, vectors) if r], k=config.rrf_k)
    if fused and fused[0][1] >= config.threshold:
        ranked = fused
        if config.cross_scorer is not None:
            order = {name: i for i, (name, _) in enumerate(fused)}
            ranked = sorted(
                fused,
                key=lambda pair: (-config.cross_scorer.score(
                    capability_query, _doc_text(candidates[pair[0]])), order[pair[0]]),
            )
        return candidates[ranked[0][0]]

    # Stage 3: synthesise on demand.
    if creator is not None:
        skill = creator.synthesise(capability_query, None, bank)
        append_skill(bank, skill)
        return skill

    raise NotResolvable(f"no skill resolves {capability_query!r} and no creator configured")


def _generate(backend, prompt: str, max_tokens: int = 2048) -> str:
    return backend.generate(prompt, max_tokens=max_tokens, temperature=0.0, timeout_s=120.0)


def create_skill(
    spec_text: str,
    kind: str,
    backend,
    retries: int = 2,
    bank: SkillBank | None = None,
    script_validator=None,
) -> Skill:
    """Ask the backend for a complete skill document and gate it through validation.

    The returned skill is not yet appended; callers append (resolve_skill
    appends automatically). Version is normalised against the bank when given.
    """
    template = load_prompt("skill_create")
    prompt = render_prompt(template, capability=spec_text, kind=kind)
    failure = ""
    for attempt in range(retries + 1):
        text = _generate(backend, prompt if not failure else prompt + f"\n\nPrevious attempt rejected: {failure}\n")
        try:
            skill = parse_skill_document(text)
            if kind and skill.kind != kind:
                raise SyntaxInvalid(f"requested kind {kind!r}, backend produced {skill.kind!r}")
            version = 1
            if bank is not None and bank.has(skill.name):
                version = bank.latest_version(skill.name) + 1
            skill = skill.with_version(version)
            validate_skill(skill, script_validator=script_validator)
            return skill
        except SyntaxInvalid as exc:
            failure = str(exc)
            logger.warning("create_skill attempt %d rejected: %s", attempt + 1, exc)
    raise SynthesisFailed(f"no valid skill after {retries + 1} attempts: {failure}")


def repair_skill(
    bank: SkillBank,
    skill_name: str,
    error_trace: str,
    backend,
    retries: int = 2,
) -> Skill:
    """Synthesise a corrected next version from the current body plus the trace.

    On persistent validation failure the original is left intact.
    """
    if not error_trace.strip():
        raise ValueError("error trace must be non-empty")
    current = bank.latest(skill_name)  # raises UnknownSkill when absent
    template = load_prompt("skill_repair")
    prompt = render_prompt(template, name=skill_name, body=current.body, trace=error_trace)
    failure = ""
    for attempt in range(retries + 1):
        body = _generate(backend, prompt if not failure else prompt + f"\n\nPrevious attempt rejected: {failure}\n")
        candidate = current.with_version(current.version + 1, body=body)
        try:
            validate_skill(candidate, script_validator=bank.script_validator)
        except SyntaxInvalid as exc:
            failure = str(exc)
            logger.warning("repair attempt %d rejected: %s", attempt + 1, exc)
            continue
        append_skill(bank, candidate)
        return candidate
    raise RepairFailed(f"{skill_name}: no valid repair after {retries + 1} attempts")


def evolve_skill(
    bank: SkillBank,
    skill_name: str,
    extension_request: str,
    backend,
    retries: int = 2,
) -> Skill:
    """Extend a skill with new capabilities while preserving its call contract.

    For function skills the declared entry command and every existing named
    argument must survive into the new manifest.
    """
    current = bank.latest(skill_name)
    template = load_prompt("skill_evolve")
    prompt = render_prompt(
        template,
        name=skill_name,
        document=f"entry: {current.entry}\nargs: {list(current.arg_manifest)}\n\n{current.body}",
        request=extension_request,
    )
    failure = ""
    for attempt in range(retries + 1):
        text = _generate(backend, prompt if not failure else prompt + f"\n\nPrevious attempt rejected: {failure}\n")
        try:
            candidate = parse_skill_document(text)
        except SyntaxInvalid as exc:
            failure = str(exc)
            continue
        if candidate.name != current.name:
            raise CompatibilityBroken(f"skill renamed {current.name!r} -> {candidate.name!r}")
        if candidate.kind != current.kind:
            raise CompatibilityBroken("skill kind may not change")
        if current.kind == "function":
            if candidate.entry != current.entry:
                raise CompatibilityBroken(
                    f"entry command changed: {current.entry!r} -> {candidate.entry!r}"
                )
            missing = set(current.arg_manifest) - set(candidate.arg_manifest)
            if missing:
                raise CompatibilityBroken(f"manifest drops existing arguments {sorted(missing)}")
        candidate = candidate.with_version(current.version + 1,
                                           frontmatter=candidate.frontmatter)
        try:
            validate_skill(candidate, script_validator=bank.script_validator)
        except SyntaxInvalid as exc:
            failure = str(exc)
            continue
        append_skill(bank, candidate)
        return candidate
    raise SynthesisFailed(f"{skill_name}: no valid evolution after {retries + 1} attempts")
