"""Reflect stage: cluster queries by structure, synthesise skills, enforce hygiene.

Synthesised decomposition and router texts may carry only structural
placeholders from a closed vocabulary; any entity literal drawn from the
member training queries gets the candidate rejected and re-prompted.
"""
from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field
from typing import Sequence

from ..backends import GenerationBackend, extract_json_payload
from ..errors import ReflectionInvalid
from ..planning import (
    FEATURE_CATEGORY_LINES,
    FEATURE_ENTITY_LIST,
    FEATURE_MULTIPLE_SOURCES,
    FEATURE_TIME_SPAN,
    KNOWN_STRATEGIES,
    STRATEGY_SPLIT_BY_CATEGORY,
    STRATEGY_SPLIT_BY_ENTITY,
    STRATEGY_SPLIT_BY_SOURCE,
    STRATEGY_SPLIT_BY_TIME,
    query_features,
)
from ..prompting import load_prompt, render_prompt
from .verify import ErrorReport

logger = logging.getLogger(__name__)

CLUSTER_OTHER = "other"
CLUSTER_LABELS = KNOWN_STRATEGIES + (CLUSTER_OTHER,)

PLACEHOLDER_VOCABULARY = frozenset(
    {"ENTITY", "TIME_RANGE", "REGION", "SOURCE", "CATEGORY", "FIELD"}
)

# Generic instruction, attribute, calendar, and unit words that appear
# capitalised in queries without naming an entity. Kept deliberately small;
# a false rejection only costs a reflection retry.
_LITERAL_WHITELIST = frozenset("""
a an the if for from to between and or in on by of with each every all any
list lists columns column output outputs rows row table tables markdown na
compile search include released published official websites website records
record paper papers team teams date dates time times year years name names
title titles author authors host city cities country countries venue venues
organisation organization organisations organizations publication primary
single its own chronological order omissions inclusive becoming ceo number
model models series process cores threads frequency cache graphics
architecture found cannot information manufacturing core
january february march april may june july august september october november
december jan feb mar apr jun jul aug sep sept oct nov dec
monday tuesday wednesday thursday friday saturday sunday
ghz mhz hz mb gb kb tb nm mm cm km kg l2 l3
""".split())

_WORD_TOKEN_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9'-]*")
_YEAR_TOKEN_RE = re.compile(r"\b(?:19|20)\d{2}\b")
_PLACEHOLDER_RE = re.compile(r"\{([A-Z_]+)\}")


def extract_entity_literals(query_text: str) -> set[str]:
    """Case-folded entity-like tokens of a query: capitalised words plus years."""
    literals: set[str] = set()
    for token in _WORD_TOKEN_RE.findall(query_text):
        base = token[:-2] if token.endswith("'s") else token
        if len(base) < 2 or not base[0].isupper():
            continue
        folded = base.casefold()
        if folded in _LITERAL_WHITELIST:
            continue
        literals.add(folded)
    literals.update(_YEAR_TOKEN_RE.findall(query_text))
    return literals


def placeholder_violations(skill_text: str, literals: set[str]) -> list[str]:
    """Tokens of *skill_text* that leak query literals, plus unknown placeholders."""
    violations: set[str] = set()
    for token in _WORD_TOKEN_RE.findall(skill_text):
        base = token[:-2] if token.endswith("'s") else token
        if base.casefold() in literals:
            violations.add(base.casefold())
    for ph in _PLACEHOLDER_RE.findall(skill_text):
        if ph not in PLACEHOLDER_VOCABULARY:
            violations.add("{" + ph + "}")
    return sorted(violations)


def heuristic_cluster_label(query_text: str) -> str:
    features = query_features(query_text)
    if FEATURE_ENTITY_LIST in features:
        return STRATEGY_SPLIT_BY_ENTITY
    if FEATURE_MULTIPLE_SOURCES in features:
        return STRATEGY_SPLIT_BY_SOURCE
    if FEATURE_CATEGORY_LINES in features:
        return STRATEGY_SPLIT_BY_CATEGORY
    if FEATURE_TIME_SPAN in features:
        return STRATEGY_SPLIT_BY_TIME
    return CLUSTER_OTHER


def cluster_queries(
    query_texts: Sequence[str],
    backend: GenerationBackend | None = None,
) -> dict[str, list[str]]:
    """Group queries by structural decomposition pattern, not topic."""
    if not query_texts:
        raise ValueError("need at least one query")
    labels: list[str] = []
    if backend is not None:
        numbered = "\n".join(f"{i}. {q}" for i, q in enumerate(query_texts))
        prompt = render_prompt(load_prompt("cluster_queries"), queries=numbered)
        try:
            payload = extract_json_payload(
                backend.generate(prompt, max_tokens=512, temperature=0.0, timeout_s=120.0)
            )
        except Exception as exc:
            logger.warning("cluster backend failed, using heuristic: %s", exc)
            payload = None
        if isinstance(payload, dict):
            for i, q in enumerate(query_texts):
                label = str(payload.get(str(i), "")).strip()
                labels.append(label if label in CLUSTER_LABELS else heuristic_cluster_label(q))
        else:
            labels = [heuristic_cluster_label(q) for q in query_texts]
    else:
        labels = [heuristic_cluster_label(q) for q in query_texts]

    clusters: dict[str, list[str]] = {}
    for label, q in zip(labels, query_texts):
        clusters.setdefault(label, []).append(q)
    return clusters


@dataclass
class ReflectionOutput:
    clusters: dict[str, list[str]] = field(default_factory=dict)
    decomposition_skills: dict[str, str] = field(default_factory=dict)
    router_skill: str | None = None

    @property
    def is_empty(self) -> bool:
        return not self.decomposition_skills and self.router_skill is None

    @classmethod
    def empty(cls) -> "ReflectionOutput":
        return cls()


def _summarise_report(report: ErrorReport) -> str:
    missing = {k: len(v) for k, v in report.missing_row_categories.items()}
    anomalies = [f"{a['worker_id']}:{a['kind']}" for a in report.trajectory_anomalies]
    return (
        f"utility: {report.utility:.4f}\n"
        f"missing row categories: {missing}\n"
        f"low accuracy columns: {report.low_accuracy_columns}\n"
        f"anomalies: {anomalies}"
    )


def _validated_generation(
    backend: GenerationBackend,
    prompt: str,
    literals: set[str],
    retries: int,
    what: str,
) -> str:
    feedback = ""
    for attempt in range(retries + 1):
        text = backend.generate(
            prompt if not feedback else prompt + f"\n\nPrevious attempt rejected: {feedback}\n",
            max_tokens=2048, temperature=0.0, timeout_s=120.0,
        )
        violations = placeholder_violations(text, literals)
        if not violations:
            return text
        feedback = f"contains forbidden literals {violations}; use structural placeholders only"
        logger.warning("%s attempt %d rejected: %s", what, attempt + 1, feedback)
    raise ReflectionInvalid(f"{what} kept violating the placeholder constraint: {feedback}")


def reflect(
    clusters: dict[str, list[str]],
    reports: Sequence[ErrorReport],
    backend: GenerationBackend,
    retries: int = 2,
) -> ReflectionOutput:
    """One decomposition skill per cluster plus a router, hygiene-gated."""
    if not clusters:
        raise ValueError("clusters must be non-empty")
    literals: set[str] = set()
    for queries in clusters.values():
        for q in queries:
            literals |= extract_entity_literals(q)

    report_summary = "\n---\n".join(_summarise_report(r) for r in reports) or "(no reports)"

    decomposition_skills: dict[str, str] = {}
    for label, queries in sorted(clusters.items()):
        prompt = render_prompt(
            load_prompt("reflect_skills"),
            label=label,
            queries="\n".join(f"- query #{i}" for i, _ in enumerate(queries, start=1)),
            report=report_summary,
        )
        decomposition_skills[label] = _validated_generation(
            backend, prompt, literals, retries, what=f"decomposition skill for {label}"
        )

    router_prompt = render_prompt(
        load_prompt("reflect_router"),
        labels=", ".join(sorted(set(clusters) | set(KNOWN_STRATEGIES))),
        clusters="\n".join(f"- {label}: {len(qs)} queries" for label, qs in sorted(clusters.items())),
    )
    router_skill = _validated_generation(backend, router_prompt, literals, retries, what="router skill")

    return ReflectionOutput(
        clusters={k: list(v) for k, v in clusters.items()},
        decomposition_skills=decomposition_skills,
        router_skill=router_skill,
    )
