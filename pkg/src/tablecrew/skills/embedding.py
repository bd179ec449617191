"""Pluggable text embeddings with a deterministic local fallback.

The fallback hashes character 3-grams into a fixed-width count vector and
L2-normalises, so desk-scale retrieval needs no hosted model and produces
identical vectors across runs and hosts. A hosted provider plugs in through
the same protocol (endpoint and credential from EMBEDDING_API_URL /
EMBEDDING_API_KEY).
"""
from __future__ import annotations

import hashlib
import json
import os
import urllib.request
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

EMBEDDING_URL_ENV = "EMBEDDING_API_URL"
EMBEDDING_KEY_ENV = "EMBEDDING_API_KEY"


@runtime_checkable
class EmbeddingProvider(Protocol):
    dimension: int

    def embed(self, text: str) -> np.ndarray: ...


def _gram_bucket(gram: str, dimension: int) -> int:
    digest = hashlib.sha1(gram.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "big") % dimension


class HashedNgramEmbedding:
    """Hashed character-3-gram counts, L2-normalised to unit length."""

    def __init__(self, dimension: int = 256):
        self.dimension = dimension

    def embed(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dimension, dtype=np.float64)
        folded = text.casefold()
        if len(folded) >= 3:
            grams = [folded[i:i + 3] for i in range(len(folded) - 2)]
        elif folded:
            grams = [folded]
        else:
            grams = []
        for g in grams:
            vec[_gram_bucket(g, self.dimension)] += 1.0
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            vec[0] = 1.0
            return vec
        return vec / norm


class HTTPEmbeddingProvider:
    """POST {"text": ...} -> {"vector": [...]}; output re-normalised locally."""

    def __init__(self, url: str | None = None, api_key: str | None = None,
                 dimension: int = 1024, timeout_s: float = 30.0):
        self.url = url or os.environ.get(EMBEDDING_URL_ENV, "")
        self.api_key = api_key if api_key is not None else os.environ.get(EMBEDDING_KEY_ENV, "")
        self.dimension = dimension
        self.timeout_s = timeout_s
        if not self.url:
            raise ValueError(f"no embedding endpoint; set {EMBEDDING_URL_ENV}")

    def embed(self, text: str) -> np.ndarray:
        payload = json.dumps({"text": text}).encode("utf-8")
        req = urllib.request.Request(
            self.url, data=payload, headers={"Content-Type": "application/json"}
        )
        if self.api_key:
            req.add_header("Authorization", f"Bearer {self.api_key}")
        with urllib.request.urlopen(req, timeout=self.timeout_s) as resp:
            data = json.loads(resp.read().decode("utf-8"))
        vec = np.asarray(data["vector"], dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        return vec / norm if norm else vec


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


class VectorIndex:
    """Doc key -> unit vector; cosine-similarity top-n."""

    def __init__(self, provider: EmbeddingProvider):
        self.provider = provider
        self._vectors: dict[str, np.ndarray] = {}

    def build(self, docs: dict[str, str]) -> None:
        self._vectors = {key: self.provider.embed(text) for key, text in docs.items()}

    def top_n(self, query: str, n: int) -> list[tuple[str, float]]:
        qv = self.provider.embed(query)
        scored = [(key, cosine_similarity(qv, v)) for key, v in self._vectors.items()]
        scored = [(k, s) for k, s in scored if s > 0.0]
        scored.sort(key=lambda pair: (-pair[1], pair[0]))
        return scored[:n]


def rank_keys(scored: Sequence[tuple[str, float]]) -> list[str]:
    return [key for key, _ in scored]
