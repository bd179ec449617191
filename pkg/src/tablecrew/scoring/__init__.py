from .compare import ComparatorConfig, ParseFailure, compare_cell, normalize_url, parse_numeric
from .matching import cell_match_counts, match_rows, optimal_matched_cells
from .metrics import ScoreReport, aggregate_runs, score

__all__ = [
    "ComparatorConfig",
    "ParseFailure",
    "compare_cell",
    "normalize_url",
    "parse_numeric",
    "cell_match_counts",
    "match_rows",
    "optimal_matched_cells",
    "ScoreReport",
    "aggregate_runs",
    "score",
]
