"""Table-level scores: all-or-nothing success, row-as-unit F1, cell-level F1."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from ..tables import NA, Cell, Table, fold_name
from .compare import ComparatorConfig, compare_cell
from .matching import cell_match_counts, canonical_assignment


@dataclass
class ScoreReport:
    success: bool
    row_precision: float
    row_recall: float
    row_f1: float
    item_precision: float
    item_recall: float
    item_f1: float
    per_column_accuracy: dict[str, float]
    missing_row_categories: dict[str, list[int]]
    matched_pairs: list[tuple[int, int]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "row_precision": self.row_precision,
            "row_recall": self.row_recall,
            "row_f1": self.row_f1,
            "item_precision": self.item_precision,
            "item_recall": self.item_recall,
            "item_f1": self.item_f1,
            "per_column_accuracy": self.per_column_accuracy,
            "missing_row_categories": self.missing_row_categories,
            "matched_pairs": [list(p) for p in self.matched_pairs],
        }


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def align_to_schema(pred: Table, gold_schema) -> Table:
    """Rebuild the prediction in the gold column order by case-folded name.

    Columns the prediction lacks become "NA"; extra predicted columns drop.
    """
    if pred.schema == gold_schema:
        return pred
    pred_index = {fold_name(n): i for i, n in enumerate(pred.schema.names)}
    kinds = gold_schema.kinds
    rows = []
    for row in pred.rows:
        cells = []
        for (name, kind) in gold_schema.columns:
            src = pred_index.get(fold_name(name))
            value = row[src].raw if src is not None else NA
            cells.append(Cell(raw=value, kind=kind))
        rows.append(tuple(cells))
    return Table(schema=gold_schema, rows=tuple(rows))


def score(
    pred: Table,
    gold: Table,
    config: ComparatorConfig | None = None,
    row_categorizer: Callable[[Sequence[str]], str] | None = None,
) -> ScoreReport:
    """Score a prediction against gold at row and cell granularity.

    A matched row is an assigned pair whose cells all match; success demands
    equal row counts and every cell matched. Two empty tables are identical,
    hence a vacuous success. Per-column accuracy is the matched fraction over
    assigned pairs. Unmatched gold rows are grouped by *row_categorizer*
    (default: one "uncategorized" bucket).
    """
    config = config or ComparatorConfig()
    pred = align_to_schema(pred, gold.schema)
    ncols = len(gold.schema.columns)
    npred, ngold = pred.row_count, gold.row_count

    if npred == 0 and ngold == 0:
        return ScoreReport(
            success=True, row_precision=1.0, row_recall=1.0, row_f1=1.0,
            item_precision=1.0, item_recall=1.0, item_f1=1.0,
            per_column_accuracy={n: 1.0 for n in gold.schema.names},
            missing_row_categories={},
        )

    counts = cell_match_counts(pred, gold, config)
    pairs = canonical_assignment(counts)

    matched_cells = int(sum(counts[i, j] for i, j in pairs))
    matched_rows = sum(1 for i, j in pairs if counts[i, j] == ncols)

    row_precision = matched_rows / npred if npred else 0.0
    row_recall = matched_rows / ngold if ngold else 0.0
    item_precision = matched_cells / (npred * ncols) if npred else 0.0
    item_recall = matched_cells / (ngold * ncols) if ngold else 0.0

    per_column: dict[str, float] = {}
    if pairs:
        for c, name in enumerate(gold.schema.names):
            hits = sum(
                1 for i, j in pairs
                if compare_cell(pred.rows[i][c], gold.rows[j][c], config)
            )
            per_column[name] = hits / len(pairs)
    else:
        per_column = {n: 0.0 for n in gold.schema.names}

    categorize = row_categorizer or (lambda row_values: "uncategorized")
    matched_gold = {j for _, j in pairs}
    missing: dict[str, list[int]] = {}
    for j in range(ngold):
        if j not in matched_gold:
            label = categorize(gold.row_values(j))
            missing.setdefault(label, []).append(j)

    success = (npred == ngold) and matched_cells == ngold * ncols
    return ScoreReport(
        success=success,
        row_precision=row_precision,
        row_recall=row_recall,
        row_f1=_f1(row_precision, row_recall),
        item_precision=item_precision,
        item_recall=item_recall,
        item_f1=_f1(item_precision, item_recall),
        per_column_accuracy=per_column,
        missing_row_categories=missing,
        matched_pairs=pairs,
    )


_METRICS = ("success_rate", "row_precision", "row_recall", "row_f1",
            "item_precision", "item_recall", "item_f1")


def aggregate_runs(reports: Sequence[ScoreReport]) -> dict[str, dict[str, float]]:
    """Avg@k and Max@k per metric; success aggregates as a rate."""
    if not reports:
        raise ValueError("need at least one report")
    values: dict[str, list[float]] = {m: [] for m in _METRICS}
    for r in reports:
        values["success_rate"].append(1.0 if r.success else 0.0)
        values["row_precision"].append(r.row_precision)
        values["row_recall"].append(r.row_recall)
        values["row_f1"].append(r.row_f1)
        values["item_precision"].append(r.item_precision)
        values["item_recall"].append(r.item_recall)
        values["item_f1"].append(r.item_f1)
    return {
        "avg": {m: sum(v) / len(v) for m, v in values.items()},
        "max": {m: max(v) for m, v in values.items()},
    }
