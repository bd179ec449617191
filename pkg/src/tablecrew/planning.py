"""Upper-level planning: query classification, strategy routing, decomposition.

The task router prefers a learned ``task-router`` skill whose body carries
rule lines; absent that, a deterministic structural-feature heuristic picks
the strategy. Decomposition asks the backend for subtask specs and then
enforces the structural rules the strategy text mandates (region sub-splits
for oversized entity partitions, year sub-splits for oversized sources,
audit subtasks).
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass

from .backends import GenerationBackend, extract_json_payload
from .errors import DecompositionInvalid, NoStrategy, NotResolvable
from .prompting import load_prompt, render_prompt
from .skills.bank import SkillBank
from .skills.model import Skill
from .skills.resolver import ResolveConfig, resolve_skill
from .tables import Query, TableSchema
from .trajectory import (
    DEFAULT_TARGET_VOLUME,
    SUBTASK_AUDIT,
    SUBTASK_DATA,
    SubtaskSpec,
)

logger = logging.getLogger(__name__)

STRATEGY_SPLIT_BY_ENTITY = "split-by-entity"
STRATEGY_SPLIT_BY_SOURCE = "split-by-source"
STRATEGY_SPLIT_BY_CATEGORY = "split-by-category"
STRATEGY_SPLIT_BY_TIME = "split-by-time-period"
KNOWN_STRATEGIES = (
    STRATEGY_SPLIT_BY_ENTITY,
    STRATEGY_SPLIT_BY_SOURCE,
    STRATEGY_SPLIT_BY_CATEGORY,
    STRATEGY_SPLIT_BY_TIME,
)

FEATURE_ENTITY_LIST = "entity-list"
FEATURE_MULTIPLE_SOURCES = "multiple-sources"
FEATURE_CATEGORY_LINES = "category-lines"
FEATURE_TIME_SPAN = "time-span"

ENTITY_SUBSPLIT_VOLUME = 80
SOURCE_SUBSPLIT_VOLUME = 50

REGION_AXIS = ("North America", "Europe", "Asia-Pacific", "Latin America", "Middle East & Africa")

TASK_ROUTER_SKILL = "task-router"


@dataclass
class OrchestratorConfig:
    max_workers: int = 10
    strategy_bank: SkillBank | None = None
    round2_missing_threshold: float = 0.10
    decompose_retries: int = 1

    def __post_init__(self):
        if self.max_workers < 1:
            raise ValueError("max_workers must be >= 1")
        if not (0.0 < self.round2_missing_threshold <= 1.0):
            raise ValueError("round2_missing_threshold must be in (0, 1]")


@dataclass
class WorkerConfig:
    max_steps: int = 12
    generation_timeout_s: float = 120.0
    tool_timeout_s: float = 30.0
    skill_bank: SkillBank | None = None
    workboard_path: object | None = None
    max_consecutive_generation_timeouts: int = 3
    observation_window: int = 4

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")


# -- structural features -----------------------------------------------------

_POSSESSIVE_ENTITY_RE = re.compile(
    r"\b[A-Z][\w.-]*(?:\s+[A-Z][\w.-]*)*'s\s+(?:\w+\s+){0,2}?\w+s\b"
)
_ENTITY_ENUM_RE = re.compile(
    r"\b(?:every|each|all)\b[^.]{0,60}\b(tours|brands|athletes|teams|artists|franchises|companies)\b",
    re.IGNORECASE,
)
_SOURCE_PAIR_RE = re.compile(
    r"\b(?:published by|compiled by|released by|from)\s+(?:the\s+)?"
    r"([A-Z][\w-]*(?:\s+[A-Z][\w-]*)*)(?:\s+(?:team|group|lab))?\s+and\s+(?:the\s+)?([A-Z][\w-]*)"
)
_SOURCE_CUES_RE = re.compile(
    r"\b(both organisations|both organizations|official websites of|named sources|each source)\b",
    re.IGNORECASE,
)
_CATEGORY_RE = re.compile(
    r"\b(product lines?|product series|processors|product categories|models|series|SKUs)\b",
    re.IGNORECASE,
)
_YEAR_RE = re.compile(r"\b(19|20)\d\d\b")
_YEAR_RANGE_RE = re.compile(
    r"\b(?:from|between)\b[^.]{0,40}?\b((?:19|20)\d\d)\b[^.]{0,40}?\b(?:to|and|through)\b[^.]{0,40}?\b((?:19|20)\d\d)\b"
)


def query_features(text: str) -> set[str]:
    """Deterministic structural signals of a query."""
    features: set[str] = set()
    if _POSSESSIVE_ENTITY_RE.search(text) or _ENTITY_ENUM_RE.search(text):
        features.add(FEATURE_ENTITY_LIST)
    if _SOURCE_PAIR_RE.search(text) or _SOURCE_CUES_RE.search(text):
        features.add(FEATURE_MULTIPLE_SOURCES)
    if _CATEGORY_RE.search(text):
        features.add(FEATURE_CATEGORY_LINES)
    if len(_YEAR_RE.findall(text)) >= 2 or _YEAR_RANGE_RE.search(text):
        features.add(FEATURE_TIME_SPAN)
    return features


def detect_year_range(text: str) -> tuple[int, int] | None:
    m = _YEAR_RANGE_RE.search(text)
    if m:
        a, b = int(m.group(1)), int(m.group(2))
        return (a, b) if a <= b else (b, a)
    years = sorted({int(y.group(0)) for y in re.finditer(r"\b(?:19|20)\d\d\b", text)})
    if len(years) >= 2:
        return years[0], years[-1]
    return None


def fallback_strategy(text: str) -> str:
    """Heuristic used when no learned router exists."""
    features = query_features(text)
    if FEATURE_ENTITY_LIST in features:
        return STRATEGY_SPLIT_BY_ENTITY
    if FEATURE_MULTIPLE_SOURCES in features:
        return STRATEGY_SPLIT_BY_SOURCE
    if FEATURE_CATEGORY_LINES in features:
        return STRATEGY_SPLIT_BY_CATEGORY
    return STRATEGY_SPLIT_BY_TIME


# -- learned router ----------------------------------------------------------

_RULE_WHEN_RE = re.compile(r"^\s*-\s*when\s+([a-z-]+)\s*:\s*([a-z0-9-]+)\s*$")
_RULE_MATCH_RE = re.compile(r"^\s*-\s*match:\s*\"(.+)\"\s*->\s*([a-z0-9-]+)\s*$")
_RULE_DEFAULT_RE = re.compile(r"^\s*-\s*default:\s*([a-z0-9-]+)\s*$")


@dataclass(frozen=True)
class RouterRule:
    kind: str  # "when" | "match" | "default"
    test: str
    label: str


def parse_router_rules(body: str) -> list[RouterRule]:
    rules: list[RouterRule] = []
    for line in body.splitlines():
        m = _RULE_WHEN_RE.match(line)
        if m:
            rules.append(RouterRule(kind="when", test=m.group(1), label=m.group(2)))
            continue
        m = _RULE_MATCH_RE.match(line)
        if m:
            rules.append(RouterRule(kind="match", test=m.group(1), label=m.group(2)))
            continue
        m = _RULE_DEFAULT_RE.match(line)
        if m:
            rules.append(RouterRule(kind="default", test="", label=m.group(1)))
    return rules


def _known_labels(strategy_bank: SkillBank | None) -> set[str]:
    labels = set(KNOWN_STRATEGIES)
    if strategy_bank is not None:
        for name in strategy_bank.names():
            if name.startswith("decompose-"):
                labels.add(name[len("decompose-"):])
    return labels


def apply_router(router: Skill, query_text: str, known: set[str]) -> str | None:
    """First matching rule whose label is a known strategy wins."""
    features = query_features(query_text)
    folded = query_text.casefold()
    for rule in parse_router_rules(router.body):
        if rule.label not in known:
            continue
        if rule.kind == "when" and rule.test in features:
            return rule.label
        if rule.kind == "match" and rule.test.casefold() in folded:
            return rule.label
        if rule.kind == "default":
            return rule.label
    return None


def route_task(
    query: Query,
    strategy_bank: SkillBank | None,
    fallback_enabled: bool = True,
    resolve_config: ResolveConfig | None = None,
) -> str:
    """Classify the query into a decomposition strategy label."""
    known = _known_labels(strategy_bank)
    if strategy_bank is not None:
        try:
            router = resolve_skill(strategy_bank, TASK_ROUTER_SKILL, config=resolve_config)
        except NotResolvable:
            router = None
        if router is not None and router.name == TASK_ROUTER_SKILL:
            label = apply_router(router, query.text, known)
            if label is not None:
                return label
    if fallback_enabled:
        return fallback_strategy(query.text)
    raise NoStrategy("no router skill matched and the fallback heuristic is disabled")


# -- schema derivation -------------------------------------------------------

_NUMERIC_NAME_RE = re.compile(
    r"\b(count|number|cores?|threads?|frequency|cache|price|capacity|size|rows|total|score|ghz|mhz|nm|mb|gb)\b",
    re.IGNORECASE,
)
_DATE_NAME_RE = re.compile(r"\b(date|time|year|day|when|published)\b", re.IGNORECASE)
_URL_NAME_RE = re.compile(r"\b(url|link|website|homepage|page)\b", re.IGNORECASE)


def infer_column_kind(name: str) -> str:
    if _DATE_NAME_RE.search(name):
        return "date"
    if _URL_NAME_RE.search(name):
        return "url"
    if _NUMERIC_NAME_RE.search(name):
        return "numeric"
    return "text"


def schema_from_query(query: Query) -> TableSchema:
    """Column names from the request, kinds from a name heuristic."""
    if not query.requested_columns:
        raise ValueError("query names no columns; supply an explicit schema")
    return TableSchema(
        columns=tuple((name, infer_column_kind(name)) for name in query.requested_columns)
    )


# -- decomposition -----------------------------------------------------------

def _shard_volume(volume: tuple[int, int], shards: int) -> tuple[int, int]:
    lo, hi = volume
    return (max(1, math.ceil(lo / shards)), max(1, math.ceil(hi / shards)))


def _is_audit(raw: dict) -> bool:
    if raw.get("kind") == SUBTASK_AUDIT:
        return True
    text = f"{raw.get('instruction', '')} {raw.get('partition', '')}".casefold()
    return "gap detection" in text or "gap-detection" in text or "verification" in text


def _region_shards(raw: dict, volume: tuple[int, int], expected: int, cap: int) -> list[dict]:
    shards = min(max(2, math.ceil(expected / ENTITY_SUBSPLIT_VOLUME)), len(REGION_AXIS), cap)
    out = []
    vol = _shard_volume(volume, shards)
    for i in range(shards):
        region = REGION_AXIS[i % len(REGION_AXIS)]
        out.append({
            "instruction": f"{raw['instruction']} (region: {region})",
            "partition": f"{raw['partition']} / {region}",
            "target_volume": list(vol),
            "kind": SUBTASK_DATA,
        })
    return out


def _year_shards(raw: dict, volume: tuple[int, int], expected: int, cap: int,
                 year_range: tuple[int, int] | None) -> list[dict]:
    shards = min(max(2, math.ceil(expected / SOURCE_SUBSPLIT_VOLUME)), cap)
    labels: list[str]
    if year_range is not None:
        y0, y1 = year_range
        span = y1 - y0 + 1
        shards = min(shards, span)
        per = math.ceil(span / shards)
        labels = []
        for i in range(shards):
            a = y0 + i * per
            b = min(y1, a + per - 1)
            labels.append(str(a) if a == b else f"{a}-{b}")
    else:
        labels = [f"period {i + 1}/{shards}" for i in range(shards)]
    vol = _shard_volume(volume, len(labels))
    return [
        {
            "instruction": f"{raw['instruction']} ({label})",
            "partition": f"{raw['partition']} / {label}",
            "target_volume": list(vol),
            "kind": SUBTASK_DATA,
        }
        for label in labels
    ]


def _parse_volume(raw: dict) -> tuple[int, int]:
    tv = raw.get("target_volume")
    if tv is None:
        return DEFAULT_TARGET_VOLUME
    lo, hi = int(tv[0]), int(tv[1])
    return (lo, hi)


def decompose(
    query: Query,
    strategy_skill: Skill,
    backend: GenerationBackend,
    config: OrchestratorConfig,
    schema: TableSchema | None = None,
) -> list[SubtaskSpec]:
    """Partition the query into 1..N subtask specs under the strategy skill.

    The backend proposes the partitioning; structural rules are then
    enforced: entity partitions expected to exceed 80 items are sub-split by
    region, source partitions past 50 records are sub-split by year, and an
    audit subtask is appended when the strategy text mandates one.
    """
    schema = schema or schema_from_query(query)
    label = strategy_skill.name.removeprefix("decompose-")
    prompt = render_prompt(
        load_prompt("orchestrator_decompose"),
        max_workers=str(config.max_workers),
        strategy_label=label,
        strategy_body=strategy_skill.body,
        query=query.text,
        columns=", ".join(schema.names),
    )

    raw_specs: list[dict] | None = None
    for attempt in range(config.decompose_retries + 1):
        text = backend.generate(prompt, max_tokens=4096, temperature=0.0, timeout_s=120.0)
        payload = extract_json_payload(text)
        if isinstance(payload, list) and payload and all(
            isinstance(e, dict) and e.get("instruction") and e.get("partition") for e in payload
        ):
            raw_specs = payload
            break
        logger.warning("decomposition attempt %d unparseable", attempt + 1)
    if raw_specs is None:
        raise DecompositionInvalid("backend output could not be parsed into subtask specs")
    if len(raw_specs) > config.max_workers:
        raise DecompositionInvalid(
            f"backend proposed {len(raw_specs)} subtasks, ceiling is {config.max_workers}"
        )

    skill_text = strategy_skill.body.casefold()
    wants_gap_detection = "gap-detection" in skill_text or "gap detection" in skill_text
    wants_verification = "verification worker" in skill_text or "dedicated verification" in skill_text

    expanded: list[dict] = []
    year_range = detect_year_range(query.text)
    for raw in raw_specs:
        volume = _parse_volume(raw)
        expected = int(raw.get("expected_volume", volume[1]))
        if _is_audit(raw):
            expanded.append({**raw, "kind": SUBTASK_AUDIT, "target_volume": [0, 0]})
            continue
        shard_cap = max(1, config.max_workers - len(raw_specs) + 1)
        if label == STRATEGY_SPLIT_BY_ENTITY and expected > ENTITY_SUBSPLIT_VOLUME:
            expanded.extend(_region_shards(raw, volume, expected, shard_cap))
        elif label == STRATEGY_SPLIT_BY_SOURCE and expected > SOURCE_SUBSPLIT_VOLUME:
            expanded.extend(_year_shards(raw, volume, expected, shard_cap, year_range))
        else:
            expanded.append({**raw, "kind": SUBTASK_DATA, "target_volume": list(volume)})

    has_audit = any(r.get("kind") == SUBTASK_AUDIT for r in expanded)
    if (wants_gap_detection or wants_verification) and not has_audit and len(expanded) < config.max_workers:
        if wants_gap_detection:
            expanded.append({
                "instruction": (
                    "Audit peer coverage on the workboard: compare delivered rows against "
                    "each subtask's target volume and report gaps."
                ),
                "partition": "gap-detection",
                "target_volume": [0, 0],
                "kind": SUBTASK_AUDIT,
            })
        else:
            expanded.append({
                "instruction": (
                    "Cross-check delivered rows against the canonical source named in the "
                    "query and report conflicting fields."
                ),
                "partition": "verification",
                "target_volume": [0, 0],
                "kind": SUBTASK_AUDIT,
            })

    if len(expanded) > config.max_workers:
        raise DecompositionInvalid(
            f"{len(expanded)} subtasks after structural expansion, ceiling is {config.max_workers}"
        )

    specs = []
    for i, raw in enumerate(expanded, start=1):
        lo, hi = raw.get("target_volume", list(DEFAULT_TARGET_VOLUME))
        specs.append(
            SubtaskSpec(
                id=f"t{i}",
                instruction=str(raw["instruction"]),
                partition=str(raw["partition"]),
                schema=schema,
                target_volume=(int(lo), int(hi)),
                kind=raw.get("kind", SUBTASK_DATA),
            )
        )
    return specs
