"""Retriever contract, retrieval cache, and reranker decorator.

Result lists are always sorted by score descending with ties broken by
ascending passage_id, and carry contiguous 1-based ranks. The cache stores
the largest k ever requested per (backend fingerprint, normalized query)
and serves smaller requests as prefixes.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Protocol

from .corpus import Passage

logger = logging.getLogger(__name__)

_WS = re.compile(r"\s+")


@dataclass(frozen=True)
class ScoredPassage:
    passage_id: str
    score: float
    rank: int

    def to_dict(self) -> dict:
        return {"id": self.passage_id, "score": self.score, "rank": self.rank}


@dataclass(frozen=True)
class RetrievalRequest:
    query: str
    top_k: int = 5

    def __post_init__(self) -> None:
        if self.top_k < 1:
            raise ValueError("top_k must be >= 1")


class Retriever(Protocol):
    fingerprint: str

    def retrieve(self, query: str, top_k: int) -> list[ScoredPassage]: ...


def rank_scored(scored: Iterable[tuple[str, float]], k: int | None = None) -> list[ScoredPassage]:
    """Sort (id, score) pairs per the result-list invariants and assign ranks."""
    ordered = sorted(scored, key=lambda pair: (-pair[1], pair[0]))
    if k is not None:
        ordered = ordered[:k]
    return [ScoredPassage(pid, score, rank) for rank, (pid, score) in enumerate(ordered, 1)]


def retrieve(backend: Retriever, req: RetrievalRequest) -> list[ScoredPassage]:
    return backend.retrieve(req.query, req.top_k)


def normalize_query(query: str) -> str:
    """Cache-key normalization: trim and collapse internal whitespace only."""
    return _WS.sub(" ", query.strip())


class RetrievalCache:
    """Query -> result-list cache keyed by backend fingerprint.

    Concurrent readers are safe; writes for the same key may race and
    recompute, which is correct (last write wins with identical content).
    """

    def __init__(self):
        self._entries: dict[tuple[str, str], tuple[int, list[ScoredPassage]]] = {}
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._entries)

    def lookup(self, fingerprint: str, query: str, top_k: int) -> list[ScoredPassage] | None:
        entry = self._entries.get((fingerprint, normalize_query(query)))
        if entry is None:
            return None
        stored_k, results = entry
        if stored_k < top_k:
            return None
        return results[:top_k]

    def store(self, fingerprint: str, query: str, top_k: int, results: list[ScoredPassage]) -> None:
        key = (fingerprint, normalize_query(query))
        existing = self._entries.get(key)
        if existing is None or top_k > existing[0]:
            self._entries[key] = (top_k, list(results))

    def save(self, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for (fingerprint, query), (stored_k, results) in sorted(self._entries.items()):
                fh.write(
                    json.dumps(
                        {
                            "query": query,
                            "backend": fingerprint,
                            "k": stored_k,
                            "results": [{"id": r.passage_id, "score": r.score} for r in results],
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path: str | Path) -> "RetrievalCache":
        """Load a cache file; corrupt lines are skipped with a warning."""
        cache = cls()
        with Path(path).open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    results = [
                        ScoredPassage(r["id"], float(r["score"]), rank)
                        for rank, r in enumerate(obj["results"], 1)
                    ]
                    cache._entries[(obj["backend"], normalize_query(obj["query"]))] = (
                        int(obj["k"]),
                        results,
                    )
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    logger.warning("cache file %s line %d corrupt; treating as miss", path, lineno)
        return cache


EXTERNAL_FINGERPRINT = "external"


def import_external_cache(
    cache: RetrievalCache, path: str | Path
) -> dict[str, Passage]:
    """Import a custom-format cache: {"query": [{"id","contents","score"}...]}.

    Entries are stored under the "external" fingerprint. Returns the passages
    referenced by the imported results so callers can resolve contents for
    ids that are not in any local corpus.
    """
    passages: dict[str, Passage] = {}
    with Path(path).open(encoding="utf-8") as fh:
        data = json.load(fh)
    for query, rows in data.items():
        scored = [(row["id"], float(row["score"])) for row in rows]
        results = rank_scored(scored)
        cache._entries[(EXTERNAL_FINGERPRINT, normalize_query(query))] = (len(results), results)
        for row in rows:
            passages[row["id"]] = Passage(
                id=row["id"], title=row.get("title", ""), contents=row["contents"]
            )
    return passages


def cached_retrieve(
    cache: RetrievalCache, backend: Retriever, req: RetrievalRequest
) -> tuple[list[ScoredPassage], bool]:
    """Serve from cache when possible; otherwise call the backend and store.

    Returns the results plus whether they came from the cache.
    """
    hit = cache.lookup(backend.fingerprint, req.query, req.top_k)
    if hit is not None:
        cache.hits += 1
        return (
            [ScoredPassage(r.passage_id, r.score, rank) for rank, r in enumerate(hit, 1)],
            True,
        )
    cache.misses += 1
    results = backend.retrieve(req.query, req.top_k)
    cache.store(backend.fingerprint, req.query, req.top_k, results)
    return results, False


class Reranker(Protocol):
    def score(self, query: str, passages: list[Passage]) -> list[float]: ...


def rerank(
    scorer: Reranker,
    query: str,
    candidates: list[ScoredPassage],
    resolve,
) -> list[ScoredPassage]:
    """Re-score candidates, re-sort, and reassign ranks; same passage set."""
    if not candidates:
        return []
    passages = [resolve(c.passage_id) for c in candidates]
    missing = [c.passage_id for c, p in zip(candidates, passages) if p is None]
    if missing:
        raise KeyError(f"cannot resolve passages for reranking: {missing}")
    scores = scorer.score(query, passages)
    return rank_scored(zip((c.passage_id for c in candidates), scores))


class BiEncoderReranker:
    """Scores by cosine between query and passage embeddings."""

    def __init__(self, embed_client):
        self.client = embed_client

    def score(self, query: str, passages: list[Passage]) -> list[float]:
        import numpy as np

        qv = np.asarray(self.client.embed([query], role="query")[0], dtype=float)
        pvs = np.asarray(self.client.embed([p.contents for p in passages], role="passage"), dtype=float)
        qn = qv / (np.linalg.norm(qv) or 1.0)
        norms = np.linalg.norm(pvs, axis=1)
        norms[norms == 0] = 1.0
        return list((pvs / norms[:, None]) @ qn)


class RemoteReranker:
    """Cross-encoder reranking via the scoring-service client."""

    def __init__(self, rerank_client):
        self.client = rerank_client

    def score(self, query: str, passages: list[Passage]) -> list[float]:
        return self.client.rerank(query, [p.contents for p in passages])


class RerankingRetriever:
    """Decorator combining any retriever with a reranker.

    On reranker failure the original order is kept when ``fallback`` is set,
    otherwise the error propagates.
    """

    def __init__(self, backend: Retriever, reranker: Reranker, resolve, fallback: bool = False):
        self.backend = backend
        self.reranker = reranker
        self.resolve = resolve
        self.fallback = fallback

    @property
    def fingerprint(self) -> str:
        return self.backend.fingerprint

    def retrieve(self, query: str, top_k: int) -> list[ScoredPassage]:
        candidates = self.backend.retrieve(query, top_k)
        try:
            return rerank(self.reranker, query, candidates, self.resolve)
        except Exception:
            if self.fallback:
                logger.warning("reranker failed; falling back to retriever order", exc_info=True)
                return candidates
            raise
