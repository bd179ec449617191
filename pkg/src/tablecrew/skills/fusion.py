"""Reciprocal Rank Fusion over strict rankings."""
from __future__ import annotations

from typing import Sequence

DEFAULT_RRF_K = 60


def rrf_fuse(ranked_lists: Sequence[Sequence[str]], k: int = DEFAULT_RRF_K) -> list[tuple[str, float]]:
    """Fuse rankings: score(d) = sum over lists containing d of 1/(k + rank_d).

    Ranks are 1-based. Each input list must be a strict ranking (no
    duplicates). Output is sorted by score descending, ties broken by
    document name ascending.
    """
    scores: dict[str, float] = {}
    for ranking in ranked_lists:
        if len(set(ranking)) != len(ranking):
            raise ValueError("each ranked list must be a strict ranking without duplicates")
        for rank, doc in enumerate(ranking, start=1):
            scores[doc] = scores.get(doc, 0.0) + 1.0 / (k + rank)
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))
