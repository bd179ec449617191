import itertools

import numpy as np
import pytest

from tablecrew.tables import Table, TableSchema
from tablecrew.trajectory import SubtaskSpec


@pytest.fixture
def two_col_schema():
    return TableSchema.of(("Date", "date"), ("City", "categorical"))


@pytest.fixture
def three_col_schema():
    return TableSchema.of(("A", "text"), ("B", "text"), ("C", "text"))


def make_specs(schema, *ids, **overrides):
    specs = []
    for sid in ids:
        specs.append(SubtaskSpec(
            id=sid,
            instruction=overrides.get("instruction", f"work on {sid}"),
            partition=overrides.get("partition", f"slice {sid}"),
            schema=schema,
            target_volume=overrides.get("target_volume", (10, 20)),
        ))
    return specs


def brute_force_best_total(counts: np.ndarray) -> int:
    """Exhaustive assignment oracle: max total matched cells over all injective maps."""
    p, g = counts.shape
    if p == 0 or g == 0:
        return 0
    best = 0
    if p <= g:
        for perm in itertools.permutations(range(g), p):
            best = max(best, int(sum(counts[i, perm[i]] for i in range(p))))
    else:
        for perm in itertools.permutations(range(p), g):
            best = max(best, int(sum(counts[perm[j], j] for j in range(g))))
    return best


def brute_force_canonical_pairs(counts: np.ndarray) -> list[tuple[int, int]]:
    """Oracle for the canonical assignment: max total, then lexicographically
    smallest list of positive (pred, gold) pairs."""
    p, g = counts.shape
    if p == 0 or g == 0:
        return []
    candidates = []
    if p <= g:
        maps = ((tuple(zip(range(p), perm))) for perm in itertools.permutations(range(g), p))
    else:
        maps = ((tuple((perm[j], j) for j in range(g))) for perm in itertools.permutations(range(p), g))
    for pairs in maps:
        positive = sorted((i, j) for i, j in pairs if counts[i, j] > 0)
        total = int(sum(counts[i, j] for i, j in positive))
        candidates.append((total, positive))
    best_total = max(t for t, _ in candidates)
    return min(pairs for t, pairs in candidates if t == best_total)


def random_table_pair(rng, schema, max_rows=6):
    """A (pred, gold) pair over a small value alphabet to force partial matches."""
    kinds = schema.kinds
    alphabet = ["v1", "v2", "v3", "NA"]

    def rows(n):
        return [
            [rng.choice(alphabet) for _ in kinds]
            for _ in range(n)
        ]

    pred = Table.from_values(schema, rows(rng.randrange(0, max_rows + 1)))
    gold = Table.from_values(schema, rows(rng.randrange(1, max_rows + 1)))
    return pred, gold
