"""Synthetic desk-scale fixtures: corpora, playbooks, banks, and gold tables.

Everything here is deterministic and network-free. The concert fixture drives
the end-to-end path (entity decomposition with a region sub-split, a
gap-detection audit, a Round-2 recovery, deduplicated aggregation); the tour
training fixture drives the multi-episode evolution loop.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .skills.bank import SkillBank, append_skill, new_skill
from .tables import Query, Table, TableSchema, render_table
from .webenv import FixtureCorpus
from .worker import format_response, format_tool_call

CONCERT_SCHEMA = TableSchema.of(
    ("Date", "date"),
    ("Concert Name", "categorical"),
    ("Host Country", "categorical"),
    ("Host City", "categorical"),
    ("Host Venue", "categorical"),
)

CONCERT_QUERY_TEXT = (
    "List every concert on Nova Reyes's official tours from Jan 1, 2014 to May 1, 2025. "
    "Columns: Date, Concert Name, Host Country, Host City, Host Venue. "
    "Each show on its own row, in chronological order, no omissions."
)

ROUTER_FIXTURE_BODY = """# Task router
Classify the query by structural signals; first matching rule wins.

- when entity-list: split-by-entity
- when multiple-sources: split-by-source
- when category-lines: split-by-category
- when time-span: split-by-time-period
- default: split-by-time-period
"""

ENTITY_STRATEGY_BODY = """# Split-by-entity decomposition
When the query targets a LIST OF NAMED ENTITIES (for example tours, brands,
or athletes), split by {ENTITY} name, not by time period. Each worker takes
one {ENTITY} as its search keyword.

Rules learned from past failures:
- If any {ENTITY} has >80 expected items, split further by {REGION}.
- Always include a gap-detection worker.
- If >10% missing after gap-detection, trigger Round 2.
"""

_STANDARD_TOURS = (
    ("First Light Tour", 2014),
    ("Midnight Sun Tour", 2016),
    ("Red Horizon Tour", 2018),
    ("Glass River Tour", 2020),
    ("Solstice Tour", 2022),
)

_TOUR_STOPS = (
    ("USA", "Austin", "Moonlight Arena"),
    ("USA", "Denver", "Summit Hall"),
    ("Canada", "Toronto", "Lakeside Bowl"),
    ("USA", "Seattle", "Rainier Stage"),
    ("Mexico", "Mexico City", "Estadio Aurora"),
    ("USA", "Chicago", "Harborlight Theatre"),
)

_WORLD_ERA_NA = (
    ("USA", "Los Angeles", "Sunset Bowl"),
    ("USA", "New York", "Atlas Garden"),
    ("Canada", "Vancouver", "Pacific Dome"),
    ("USA", "Miami", "Tidewater Stadium"),
    ("USA", "Nashville", "Rhinestone Hall"),
)

_WORLD_ERA_EU = (
    ("UK", "London", "Crown Pavilion"),
    ("France", "Paris", "Salle Lumiere"),
    ("Germany", "Berlin", "Spreewerk Arena"),
    ("Spain", "Madrid", "Plaza del Sol"),
    ("Italy", "Rome", "Teatro Aurelio"),
)


def _tour_rows(name: str, year: int, stops=_TOUR_STOPS) -> list[list[str]]:
    rows = []
    for i, (country, city, venue) in enumerate(stops):
        rows.append([f"{year}-{3 + i:02d}-{10 + i:02d}", name, country, city, venue])
    return rows


def concert_gold_rows() -> list[list[str]]:
    rows: list[list[str]] = []
    for name, year in _STANDARD_TOURS:
        rows.extend(_tour_rows(name, year))
    for i, (country, city, venue) in enumerate(_WORLD_ERA_NA):
        rows.append([f"2023-{4 + i:02d}-{12 + i:02d}", "World Era Tour", country, city, venue])
    for i, (country, city, venue) in enumerate(_WORLD_ERA_EU):
        rows.append([f"2024-{2 + i:02d}-{15 + i:02d}", "World Era Tour", country, city, venue])
    return rows


def concert_gold_table() -> Table:
    return Table.from_values(CONCERT_SCHEMA, concert_gold_rows())


def _markdown(rows: list[list[str]]) -> str:
    return render_table(Table.from_values(CONCERT_SCHEMA, rows))


def _slug(text: str) -> str:
    return text.casefold().replace(" ", "-")


@dataclass
class ConcertFixture:
    root: Path
    corpus_dir: Path
    orchestrator_playbook: Path
    worker_playbook: Path
    gold_path: Path
    schema_path: Path
    config_path: Path
    query: Query = field(default_factory=lambda: Query(
        text=CONCERT_QUERY_TEXT, requested_columns=CONCERT_SCHEMA.names))
    schema: TableSchema = CONCERT_SCHEMA

    def gold(self) -> Table:
        return concert_gold_table()


def seed_orchestrator_bank(bank_dir: Path) -> SkillBank:
    """A learned-looking strategy bank: router plus the entity decomposition skill."""
    bank = SkillBank(bank_dir)
    if not bank.has("task-router"):
        append_skill(bank, new_skill(
            name="task-router", kind="knowledge",
            description="routes queries to decomposition strategies by structural signals",
            body=ROUTER_FIXTURE_BODY, created_by="fixture",
        ))
    if not bank.has("decompose-split-by-entity"):
        append_skill(bank, new_skill(
            name="decompose-split-by-entity", kind="knowledge",
            description="decomposition strategy for split-by-entity queries",
            body=ENTITY_STRATEGY_BODY, created_by="fixture",
        ))
    return bank


def _concert_decomposition() -> str:
    specs = []
    for name, _ in _STANDARD_TOURS:
        specs.append({
            "instruction": f"Find every show on the {name}",
            "partition": name,
            "expected_volume": 6,
            "target_volume": [5, 7],
        })
    specs.append({
        "instruction": "Find every show on the World Era Tour",
        "partition": "World Era Tour",
        "expected_volume": 100,
        "target_volume": [8, 12],
    })
    return json.dumps(specs)


def _worker_entries() -> list[dict]:
    """Playbook entries: search, fetch, respond per partition."""
    entries: list[dict] = []

    def tour_entry(pattern: str, query: str, url: str, table_rows: list[list[str]]):
        entries.append({
            "pattern": pattern,
            "responses": [
                format_tool_call("search", query=query),
                format_tool_call("fetch", url=url),
                format_response(_markdown(table_rows)),
            ],
        })

    for name, year in _STANDARD_TOURS:
        rows = _tour_rows(name, year)
        if name == "Red Horizon Tour":
            rows = rows[:1]  # round 1 withholds five of six shows
        tour_entry(
            pattern=rf"Subtask t\d+: Find every show on the {name}",
            query=f"Nova Reyes {name} concerts",
            url=f"https://tourarchive.example/{_slug(name)}",
            table_rows=rows,
        )

    na_rows = [[f"2023-{4 + i:02d}-{12 + i:02d}", "World Era Tour", c, ci, v]
               for i, (c, ci, v) in enumerate(_WORLD_ERA_NA)]
    eu_rows = [[f"2024-{2 + i:02d}-{15 + i:02d}", "World Era Tour", c, ci, v]
               for i, (c, ci, v) in enumerate(_WORLD_ERA_EU)]
    tour_entry(
        pattern=r"Subtask t\d+: Find every show on the World Era Tour \(region: North America\)",
        query="Nova Reyes World Era Tour North America concerts",
        url="https://tourarchive.example/world-era-tour-na",
        table_rows=na_rows,
    )
    tour_entry(
        pattern=r"Subtask t\d+: Find every show on the World Era Tour \(region: Europe\)",
        query="Nova Reyes World Era Tour Europe concerts",
        url="https://tourarchive.example/world-era-tour-eu",
        table_rows=eu_rows,
    )

    # Round 2 recovers the withheld Red Horizon shows: one exact duplicate of
    # the round-1 row (exercises dedup) and one wrong venue (keeps Row F1 just
    # under perfect).
    red_full = _tour_rows("Red Horizon Tour", 2018)
    red_full[5] = [red_full[5][0], red_full[5][1], red_full[5][2], red_full[5][3], "Wrong Venue Hall"]
    entries.append({
        "pattern": r"Subtask t\d+: Round 2: recover the missing rows for partition 'Red Horizon Tour'",
        "responses": [
            format_tool_call("search", query="Nova Reyes Red Horizon Tour full itinerary"),
            format_tool_call("fetch", url="https://tourarchive.example/red-horizon-tour-complete"),
            format_response(_markdown(red_full)),
        ],
    })

    entries.append({
        "pattern": r"Subtask t\d+: Audit peer coverage",
        "responses": [
            format_tool_call("read_workboard"),
            format_response(
                "Coverage audit: Red Horizon Tour looks short of its target volume; "
                "all other partitions appear complete."
            ),
        ],
    })
    return entries


def _concert_corpus(corpus_dir: Path) -> FixtureCorpus:
    corpus = FixtureCorpus(corpus_dir)
    for name, year in _STANDARD_TOURS:
        rows = _tour_rows(name, year)
        corpus.put("search", f"Nova Reyes {name} concerts", [{
            "title": f"{name} — complete show archive",
            "url": f"https://tourarchive.example/{_slug(name)}",
            "snippet": f"All {name} dates with venues.",
        }])
        corpus.put("fetch", f"https://tourarchive.example/{_slug(name)}", _markdown(rows))
    corpus.put("search", "Nova Reyes World Era Tour North America concerts", [{
        "title": "World Era Tour — North American leg",
        "url": "https://tourarchive.example/world-era-tour-na",
        "snippet": "North American dates.",
    }])
    corpus.put("fetch", "https://tourarchive.example/world-era-tour-na",
               _markdown([[f"2023-{4 + i:02d}-{12 + i:02d}", "World Era Tour", c, ci, v]
                          for i, (c, ci, v) in enumerate(_WORLD_ERA_NA)]))
    corpus.put("search", "Nova Reyes World Era Tour Europe concerts", [{
        "title": "World Era Tour — European leg",
        "url": "https://tourarchive.example/world-era-tour-eu",
        "snippet": "European dates.",
    }])
    corpus.put("fetch", "https://tourarchive.example/world-era-tour-eu",
               _markdown([[f"2024-{2 + i:02d}-{15 + i:02d}", "World Era Tour", c, ci, v]
                          for i, (c, ci, v) in enumerate(_WORLD_ERA_EU)]))
    corpus.put("search", "Nova Reyes Red Horizon Tour full itinerary", [{
        "title": "Red Horizon Tour — full itinerary",
        "url": "https://tourarchive.example/red-horizon-tour-complete",
        "snippet": "Complete list including late additions.",
    }])
    corpus.put("fetch", "https://tourarchive.example/red-horizon-tour-complete",
               _markdown(_tour_rows("Red Horizon Tour", 2018)))
    return corpus


def build_concert_fixture(root: Path) -> ConcertFixture:
    """Write the corpus, playbooks, gold, schema, and config under *root*."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    corpus_dir = root / "corpus"
    _concert_corpus(corpus_dir)

    orch_playbook = root / "orchestrator_playbook.json"
    orch_playbook.write_text(json.dumps({
        "entries": [{
            "pattern": r"Nova Reyes's official tours",
            "responses": [_concert_decomposition()],
        }],
    }, indent=2), encoding="utf-8")

    worker_playbook = root / "worker_playbook.json"
    worker_playbook.write_text(json.dumps({"entries": _worker_entries()}, indent=2),
                               encoding="utf-8")

    gold_path = root / "gold.md"
    gold_path.write_text(render_table(concert_gold_table()) + "\n", encoding="utf-8")

    schema_path = root / "schema.json"
    schema_path.write_text(json.dumps({
        "columns": [{"name": n, "kind": k} for n, k in CONCERT_SCHEMA.columns],
    }, indent=2), encoding="utf-8")

    seed_orchestrator_bank(root / "banks" / "orchestrator")
    SkillBank(root / "banks" / "worker")

    config_path = root / "config.toml"
    config_path.write_text(
        "seed = 7\n\n"
        "[banks]\n"
        'orchestrator = "banks/orchestrator"\n'
        'worker = "banks/worker"\n\n'
        "[environment]\n"
        'mode = "fixture"\n'
        'corpus = "corpus"\n'
        'miss_policy = "error"\n\n'
        "[orchestrator]\n"
        "max_workers = 10\n"
        "round2_missing_threshold = 0.10\n\n"
        "[worker]\n"
        "max_steps = 8\n\n"
        "[backends.orchestrator]\n"
        'kind = "scripted"\n'
        'playbook = "orchestrator_playbook.json"\n\n'
        "[backends.worker]\n"
        'kind = "scripted"\n'
        'playbook = "worker_playbook.json"\n',
        encoding="utf-8",
    )
    return ConcertFixture(
        root=root,
        corpus_dir=corpus_dir,
        orchestrator_playbook=orch_playbook,
        worker_playbook=worker_playbook,
        gold_path=gold_path,
        schema_path=schema_path,
        config_path=config_path,
    )


# -- multi-episode training fixture -------------------------------------------

TOUR_SCHEMA = TableSchema.of(
    ("Date", "date"),
    ("Concert Name", "categorical"),
    ("Host City", "categorical"),
)

TRAINING_ARTISTS = ("Lyra Venn", "Orin Vale", "Mara Quinn", "Tess Arden", "Juno Pike")

REFLECT_ENTITY_BODY = """# Split-by-entity decomposition
When the query targets a LIST OF NAMED ENTITIES, split by {ENTITY} name and
give each worker one {ENTITY} as its search keyword. Cover every entity
partition; never merge two entities into one worker.

Rules learned from observed errors:
- If any {ENTITY} has >80 expected items, split further by {REGION}.
- Verify coverage of every partition before finishing.
"""

REFLECT_ROUTER_BODY = """# Task router
- when entity-list: split-by-entity
- when multiple-sources: split-by-source
- when category-lines: split-by-category
- when time-span: split-by-time-period
- default: split-by-time-period
"""


def training_query(artist: str) -> str:
    return (
        f"List every concert on {artist}'s official tours from 2019 to 2021. "
        "Columns: Date, Concert Name, Host City."
    )


def _artist_rows(artist: str, full: bool = True) -> dict[str, list[list[str]]]:
    """Two tours of three shows; the Dusk Tour's last show is the one workers miss."""
    cities = ("Austin", "Toronto", "Berlin")
    by_tour: dict[str, list[list[str]]] = {}
    for t, (tour, year) in enumerate((("Dawn Tour", 2019), ("Dusk Tour", 2021))):
        rows = []
        for i, city in enumerate(cities):
            rows.append([f"{year}-{5 + t:02d}-{10 + i:02d}", f"{artist} {tour}", city])
        if not full and tour == "Dusk Tour":
            rows = rows[:2]
        by_tour[tour] = rows
    return by_tour


def training_gold(artist: str) -> Table:
    by_tour = _artist_rows(artist, full=True)
    return Table.from_values(TOUR_SCHEMA, by_tour["Dawn Tour"] + by_tour["Dusk Tour"])


def _training_markdown(rows: list[list[str]]) -> str:
    return render_table(Table.from_values(TOUR_SCHEMA, rows))


@dataclass
class TrainingFixture:
    root: Path
    corpus_dir: Path
    orchestrator_playbook: Path
    worker_playbook: Path
    reflect_playbook: Path
    dataset_path: Path
    config_path: Path

    def dataset(self) -> list[tuple[Query, Table]]:
        out = []
        for artist in TRAINING_ARTISTS:
            query = Query(text=training_query(artist), requested_columns=TOUR_SCHEMA.names)
            out.append((query, training_gold(artist)))
        return out


def build_training_fixture(root: Path) -> TrainingFixture:
    """Five imperfect episodes: every Dusk Tour worker misses its final show,
    so each episode has something to reflect on and both banks keep growing."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    corpus = FixtureCorpus(root / "corpus")

    orch_entries = []
    worker_entries = []
    for artist in TRAINING_ARTISTS:
        slug = _slug(artist)
        by_tour_full = _artist_rows(artist, full=True)
        by_tour_partial = _artist_rows(artist, full=False)
        orch_entries.append({
            "pattern": rf"{artist}'s official tours",
            "responses": [json.dumps([
                {
                    "instruction": f"Find every show on {artist}'s Dawn Tour",
                    "partition": f"{artist} Dawn Tour",
                    "expected_volume": 3,
                    "target_volume": [2, 4],
                },
                {
                    "instruction": f"Find every show on {artist}'s Dusk Tour",
                    "partition": f"{artist} Dusk Tour",
                    "expected_volume": 3,
                    "target_volume": [2, 4],
                },
            ])],
        })
        for tour in ("Dawn Tour", "Dusk Tour"):
            rows = by_tour_full[tour] if tour == "Dawn Tour" else by_tour_partial[tour]
            search_q = f"{artist} {tour} shows"
            url = f"https://tourarchive.example/{slug}-{_slug(tour)}"
            worker_entries.append({
                "pattern": rf"Subtask t\d+: Find every show on {artist}'s {tour}",
                "responses": [
                    format_tool_call("search", query=search_q),
                    format_tool_call("fetch", url=url),
                    format_response(_training_markdown(rows)),
                ],
            })
            corpus.put("search", search_q, [{
                "title": f"{artist} {tour} archive",
                "url": url,
                "snippet": f"Shows on the {tour}.",
            }])
            corpus.put("fetch", url, _training_markdown(rows))

    orch_playbook = root / "orchestrator_playbook.json"
    orch_playbook.write_text(json.dumps({"entries": orch_entries}, indent=2), encoding="utf-8")
    worker_playbook = root / "worker_playbook.json"
    worker_playbook.write_text(json.dumps({"entries": worker_entries}, indent=2), encoding="utf-8")

    reflect_playbook = root / "reflect_playbook.json"
    reflect_playbook.write_text(json.dumps({"entries": [
        {"pattern": r"Cluster label: split-by-entity", "responses": [REFLECT_ENTITY_BODY]},
        {"pattern": r"task-router skill", "responses": [REFLECT_ROUTER_BODY]},
    ]}, indent=2), encoding="utf-8")

    dataset_path = root / "dataset.json"
    dataset_path.write_text(json.dumps({
        "tasks": [
            {
                "query": training_query(artist),
                "columns": [[n, k] for n, k in TOUR_SCHEMA.columns],
                "gold": f"gold_{_slug(artist)}.md",
            }
            for artist in TRAINING_ARTISTS
        ],
    }, indent=2), encoding="utf-8")
    for artist in TRAINING_ARTISTS:
        (root / f"gold_{_slug(artist)}.md").write_text(
            render_table(training_gold(artist)) + "\n", encoding="utf-8"
        )

    SkillBank(root / "banks" / "orchestrator")
    SkillBank(root / "banks" / "worker")

    config_path = root / "config.toml"
    config_path.write_text(
        "seed = 11\n\n"
        "[banks]\n"
        'orchestrator = "banks/orchestrator"\n'
        'worker = "banks/worker"\n\n'
        "[environment]\n"
        'mode = "fixture"\n'
        'corpus = "corpus"\n'
        'miss_policy = "error"\n\n'
        "[orchestrator]\n"
        "max_workers = 10\n"
        "round2_missing_threshold = 0.25\n\n"
        "[worker]\n"
        "max_steps = 8\n\n"
        "[backends.orchestrator]\n"
        'kind = "scripted"\n'
        'playbook = "orchestrator_playbook.json"\n\n'
        "[backends.worker]\n"
        'kind = "scripted"\n'
        'playbook = "worker_playbook.json"\n\n'
        "[backends.reflect]\n"
        'kind = "scripted"\n'
        'playbook = "reflect_playbook.json"\n',
        encoding="utf-8",
    )
    return TrainingFixture(
        root=root,
        corpus_dir=root / "corpus",
        orchestrator_playbook=orch_playbook,
        worker_playbook=worker_playbook,
        reflect_playbook=reflect_playbook,
        dataset_path=dataset_path,
        config_path=config_path,
    )
