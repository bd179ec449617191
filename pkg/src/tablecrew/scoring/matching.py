"""Optimal one-to-one row matching on the cell-match-count matrix.

The assignment maximises the total number of matched cells across paired
rows (solved exactly via linear sum assignment). Among equally optimal
assignments the canonical one is chosen greedily: scanning prediction rows
in order, each takes the lowest gold index that still admits an optimal
completion. Pairs with zero matching cells are not part of the result.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment

from ..tables import Table
from .compare import ComparatorConfig, compare_cell


def cell_match_counts(pred: Table, gold: Table, config: ComparatorConfig | None = None) -> np.ndarray:
    """counts[i, j] = number of matching cells between pred row i and gold row j."""
    config = config or ComparatorConfig()
    counts = np.zeros((pred.row_count, gold.row_count), dtype=np.int64)
    for i, prow in enumerate(pred.rows):
        for j, grow in enumerate(gold.rows):
            counts[i, j] = sum(
                1 for pc, gc in zip(prow, grow) if compare_cell(pc, gc, config)
            )
    return counts


def optimal_matched_cells(counts: np.ndarray) -> int:
    """Maximum total matched cells over all one-to-one row assignments."""
    if counts.size == 0:
        return 0
    rows, cols = linear_sum_assignment(counts, maximize=True)
    return int(counts[rows, cols].sum())


def _optimum_with_fixed(counts: np.ndarray, fixed: list[tuple[int, int]],
                        banned_rows: set[int]) -> int:
    """Best total when *fixed* pairs are forced and *banned_rows* stay unassigned."""
    fixed_rows = {i for i, _ in fixed}
    fixed_cols = {j for _, j in fixed}
    free_rows = [i for i in range(counts.shape[0]) if i not in fixed_rows and i not in banned_rows]
    free_cols = [j for j in range(counts.shape[1]) if j not in fixed_cols]
    total = sum(int(counts[i, j]) for i, j in fixed)
    if free_rows and free_cols:
        sub = counts[np.ix_(free_rows, free_cols)]
        total += optimal_matched_cells(sub)
    return total


def canonical_assignment(counts: np.ndarray) -> list[tuple[int, int]]:
    """Deterministic optimal assignment, preferring earlier (pred, gold) pairs.

    Row i takes the smallest gold index j with a positive count such that
    forcing (i, j) preserves the optimal total; if no such j exists the row
    stays unmatched. Zero-count pairs never appear in the result.
    """
    best = optimal_matched_cells(counts)
    fixed: list[tuple[int, int]] = []
    banned_rows: set[int] = set()
    used_cols: set[int] = set()
    for i in range(counts.shape[0]):
        chosen = None
        for j in range(counts.shape[1]):
            if j in used_cols or counts[i, j] <= 0:
                continue
            if _optimum_with_fixed(counts, fixed + [(i, j)], banned_rows) == best:
                chosen = j
                break
        if chosen is None:
            banned_rows.add(i)
        else:
            fixed.append((i, chosen))
            used_cols.add(chosen)
    return fixed


def match_rows(pred: Table, gold: Table, config: ComparatorConfig | None = None) -> list[tuple[int, int]]:
    """One-to-one (pred row, gold row) pairs maximising total matched cells."""
    counts = cell_match_counts(pred, gold, config)
    return canonical_assignment(counts)
