"""From-scratch inverted index with BM25 (Okapi) scoring.

Formula: idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)) and
score = sum_t idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |d| / avgdl)).
Defaults k1=0.9, b=0.4 mirror the common sparse-toolkit configuration; both
are exposed as parameters. The analyzer is lowercase -> strip punctuation ->
whitespace split, with no stemming or stopword removal.
"""

from __future__ import annotations

import json
import math
import string
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .corpus import PassageStore
from .retrieval import ScoredPassage, rank_scored

_PUNCT_TABLE = str.maketrans({ch: " " for ch in string.punctuation})

INDEX_FORMAT_VERSION = 1


def analyze(text: str) -> list[str]:
    """Lowercase, strip punctuation, split on whitespace."""
    return text.lower().translate(_PUNCT_TABLE).split()


@dataclass(frozen=True)
class BM25Params:
    k1: float = 0.9
    b: float = 0.4

    def __post_init__(self) -> None:
        if self.k1 < 0:
            raise ValueError("k1 must be >= 0")
        if not 0 <= self.b <= 1:
            raise ValueError("b must be in [0, 1]")


class InvertedIndex:
    """Term -> (passage_id, tf) postings plus per-passage lengths."""

    def __init__(self):
        self.N = 0
        self.postings: dict[str, list[tuple[str, int]]] = {}
        self.doc_len: dict[str, int] = {}
        self.avgdl = 0.0

    def df(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    def idf(self, term: str) -> float:
        df = self.df(term)
        return math.log(1 + (self.N - df + 0.5) / (df + 0.5))

    def to_jsonl(self, path: str | Path) -> None:
        """Versioned postings dump: header line, then one line per term."""
        with Path(path).open("w", encoding="utf-8") as fh:
            header = {
                "format_version": INDEX_FORMAT_VERSION,
                "N": self.N,
                "doc_len": dict(sorted(self.doc_len.items())),
            }
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for term in sorted(self.postings):
                fh.write(json.dumps({"term": term, "postings": self.postings[term]}) + "\n")

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "InvertedIndex":
        index = cls()
        with Path(path).open(encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            if header.get("format_version") != INDEX_FORMAT_VERSION:
                raise ValueError(f"unsupported index format: {header.get('format_version')}")
            index.N = header["N"]
            index.doc_len = dict(header["doc_len"])
            for line in fh:
                obj = json.loads(line)
                index.postings[obj["term"]] = [(pid, tf) for pid, tf in obj["postings"]]
        index.avgdl = sum(index.doc_len.values()) / index.N if index.N else 0.0
        return index


def build_index(store: PassageStore, analyzer=analyze) -> InvertedIndex:
    """Deterministic index build; postings lists sorted by passage_id."""
    index = InvertedIndex()
    term_hits: dict[str, dict[str, int]] = {}
    for passage in store:
        tokens = analyzer(passage.contents)
        index.doc_len[passage.id] = len(tokens)
        for term, tf in Counter(tokens).items():
            term_hits.setdefault(term, {})[passage.id] = tf
    index.N = len(store)
    index.avgdl = sum(index.doc_len.values()) / index.N if index.N else 0.0
    for term, hits in term_hits.items():
        index.postings[term] = sorted(hits.items())
    return index


def bm25_score(
    index: InvertedIndex, params: BM25Params, query_terms: list[str], passage_id: str
) -> float:
    """Additive BM25 score of one passage; 0 when no query term occurs in it."""
    if passage_id not in index.doc_len:
        raise KeyError(f"unknown passage id {passage_id!r}")
    dl = index.doc_len[passage_id]
    norm = 1 - params.b + params.b * (dl / index.avgdl if index.avgdl else 0.0)
    score = 0.0
    for term in query_terms:
        tf = 0
        for pid, freq in index.postings.get(term, ()):
            if pid == passage_id:
                tf = freq
                break
        if tf == 0:
            continue
        score += index.idf(term) * tf * (params.k1 + 1) / (tf + params.k1 * norm)
    return score


def search(
    index: InvertedIndex, params: BM25Params, query: str, k: int, analyzer=analyze
) -> list[ScoredPassage]:
    """Top-k by BM25, postings-driven; zero-score passages excluded."""
    terms = analyzer(query)
    scores: dict[str, float] = {}
    for term in terms:
        postings = index.postings.get(term)
        if not postings:
            continue
        idf = index.idf(term)
        for pid, tf in postings:
            dl = index.doc_len[pid]
            norm = 1 - params.b + params.b * (dl / index.avgdl if index.avgdl else 0.0)
            scores[pid] = scores.get(pid, 0.0) + idf * tf * (params.k1 + 1) / (
                tf + params.k1 * norm
            )
    return rank_scored(scores.items(), k)


class BM25Retriever:
    """Retriever facade over a built index, for pipeline wiring."""

    def __init__(self, index: InvertedIndex, params: BM25Params | None = None):
        self.index = index
        self.params = params or BM25Params()

    @property
    def fingerprint(self) -> str:
        return f"bm25:k1={self.params.k1}:b={self.params.b}:N={self.index.N}:avgdl={self.index.avgdl:.6f}"

    def retrieve(self, query: str, top_k: int) -> list[ScoredPassage]:
        if self.index.N == 0:
            raise RuntimeError("BM25 index is empty; build it before retrieving")
        return search(self.index, self.params, query, top_k)
