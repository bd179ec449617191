"""Okapi BM25 over tokenized skill documents."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

_WORD_RE = re.compile(r"[a-z0-9]+")

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


def tokenize(text: str) -> list[str]:
    return _WORD_RE.findall(text.casefold())


@dataclass
class CorpusStats:
    """Document-frequency and length statistics a BM25 score depends on."""

    doc_count: int
    total_doc_len: int
    term_doc_freq: Counter = field(default_factory=Counter)

    @property
    def avg_doc_len(self) -> float:
        return self.total_doc_len / self.doc_count if self.doc_count else 0.0

    @classmethod
    def from_docs(cls, docs: Iterable[Sequence[str]]) -> "CorpusStats":
        stats = cls(doc_count=0, total_doc_len=0)
        for doc in docs:
            stats.doc_count += 1
            stats.total_doc_len += len(doc)
            for term in set(doc):
                stats.term_doc_freq[term] += 1
        return stats


def idf(term: str, stats: CorpusStats) -> float:
    df = stats.term_doc_freq.get(term, 0)
    return math.log(1.0 + (stats.doc_count - df + 0.5) / (df + 0.5))


def bm25_score(
    query_terms: Sequence[str],
    document: Sequence[str],
    corpus_stats: CorpusStats,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
) -> float:
    """Okapi BM25: non-negative, zero contribution from terms absent in the doc."""
    if not document:
        return 0.0
    tf: Mapping[str, int] = Counter(document)
    dl = len(document)
    avgdl = corpus_stats.avg_doc_len or 1.0
    score = 0.0
    for term in query_terms:
        freq = tf.get(term, 0)
        if freq == 0:
            continue
        denom = freq + k1 * (1.0 - b + b * dl / avgdl)
        score += idf(term, corpus_stats) * freq * (k1 + 1.0) / denom
    return score


class Bm25Index:
    """In-memory index: doc key -> tokens, scored against the shared stats."""

    def __init__(self, k1: float = DEFAULT_K1, b: float = DEFAULT_B):
        self.k1 = k1
        self.b = b
        self._docs: dict[str, list[str]] = {}
        self._stats = CorpusStats(doc_count=0, total_doc_len=0)

    def build(self, docs: Mapping[str, str]) -> None:
        self._docs = {key: tokenize(text) for key, text in docs.items()}
        self._stats = CorpusStats.from_docs(self._docs.values())

    def top_n(self, query: str, n: int) -> list[tuple[str, float]]:
        terms = tokenize(query)
        scored = [
            (key, bm25_score(terms, doc, self._stats, self.k1, self.b))
            for key, doc in self._docs.items()
        ]
        scored = [(k, s) for k, s in scored if s > 0.0]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored[:n]
