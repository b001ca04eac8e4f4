"""Dense retrieval: embedding client, exact vector store, and retriever.

The vector store is a flat matrix searched exhaustively — exact by
construction, the right baseline for corpora up to a few hundred thousand
passages. Approximate indexes can be layered behind the same
:class:`~ragforge.retrieval.Retriever` protocol when needed.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import httpx
import numpy as np

from .corpus import PassageStore
from .retrieval import ScoredPassage, rank_scored

METRICS = ("inner_product", "cosine")


class EmbeddingError(RuntimeError):
    """Raised when an embedding service call fails or returns bad data."""


@dataclass(frozen=True)
class EmbeddingConfig:
    """Connection and batching settings for an embedding service."""

    endpoint: str
    model: str
    batch_size: int = 1024
    query_prefix: str = ""
    passage_prefix: str = ""
    timeout: float = 30.0
    max_retries: int = 2

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


class EmbeddingClient:
    """HTTP client for an OpenAI-compatible ``/embeddings`` endpoint.

    Splits input into ``ceil(n / batch_size)`` requests and prepends the
    configured role prefix, so asymmetric models (query vs. passage
    instructions) work without callers tracking the distinction.
    """

    def __init__(self, config: EmbeddingConfig, http: httpx.Client | None = None):
        self.config = config
        if http is None:
            if config.endpoint.startswith("mock://"):
                from .mockserver import mock_http_client

                http = mock_http_client()
            else:
                http = httpx.Client(timeout=config.timeout)
        self._http = http
        self._url = self._resolve_url(config.endpoint)

    @staticmethod
    def _resolve_url(endpoint: str) -> str:
        if endpoint.startswith("mock://"):
            return "http://mock/v1/embeddings"
        return endpoint.rstrip("/") + "/embeddings"

    def _post(self, payload: dict) -> dict:
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                response = self._http.post(self._url, json=payload)
            except httpx.TransportError as exc:
                last_error = exc
                time.sleep(0.1 * attempt)
                continue
            if response.status_code >= 500:
                last_error = EmbeddingError(
                    f"embedding service returned {response.status_code}"
                )
                time.sleep(0.1 * attempt)
                continue
            if response.status_code != 200:
                raise EmbeddingError(
                    f"embedding request failed with {response.status_code}: "
                    f"{response.text[:200]}"
                )
            return response.json()
        raise EmbeddingError(f"embedding request failed after retries: {last_error}")

    def _embed_batch(self, texts: list[str]) -> list[list[float]]:
        data = self._post({"model": self.config.model, "input": texts}).get("data")
        if data is None or len(data) != len(texts):
            raise EmbeddingError(
                f"embedding response has {0 if data is None else len(data)} rows "
                f"for {len(texts)} inputs"
            )
        rows = sorted(data, key=lambda row: row["index"])
        return [row["embedding"] for row in rows]

    def embed(self, texts: list[str], role: str = "passage") -> np.ndarray:
        """Embed ``texts`` with the role prefix; returns an (n, dim) array."""
        if role not in ("query", "passage"):
            raise ValueError(f"role must be 'query' or 'passage', got {role!r}")
        prefix = self.config.query_prefix if role == "query" else self.config.passage_prefix
        prefixed = [prefix + t for t in texts]
        vectors: list[list[float]] = []
        for start in range(0, len(prefixed), self.config.batch_size):
            vectors.extend(self._embed_batch(prefixed[start : start + self.config.batch_size]))
        if not vectors:
            return np.zeros((0, 0))
        dims = {len(v) for v in vectors}
        if len(dims) != 1:
            raise EmbeddingError(f"inconsistent embedding dimensions in response: {sorted(dims)}")
        return np.asarray(vectors, dtype=np.float64)

    def embed_one(self, text: str, role: str = "query") -> np.ndarray:
        return self.embed([text], role=role)[0]


@dataclass
class VectorStore:
    """Flat dense index: one row per passage, searched exhaustively."""

    ids: list[str]
    matrix: np.ndarray
    metric: str = "inner_product"
    model: str = ""
    _row_of: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise ValueError(
                f"matrix shape {self.matrix.shape} does not match {len(self.ids)} ids"
            )
        if self.metric == "cosine" and len(self.ids):
            norms = np.linalg.norm(self.matrix, axis=1, keepdims=True)
            if np.any(norms == 0):
                raise ValueError("cosine metric requires non-zero vectors")
            self.matrix = self.matrix / norms
        self._row_of = {pid: i for i, pid in enumerate(self.ids)}
        if len(self._row_of) != len(self.ids):
            raise ValueError("duplicate passage ids in vector store")

    @property
    def dim(self) -> int:
        return int(self.matrix.shape[1]) if len(self.ids) else 0

    def __len__(self) -> int:
        return len(self.ids)

    def vector(self, passage_id: str) -> np.ndarray:
        return self.matrix[self._row_of[passage_id]]


def build_vector_store(
    store: PassageStore, client: EmbeddingClient, metric: str = "inner_product"
) -> VectorStore:
    passages = list(store)
    texts = [p.contents for p in passages]
    matrix = client.embed(texts, role="passage") if texts else np.zeros((0, 0))
    return VectorStore(
        ids=[p.id for p in passages], matrix=matrix, metric=metric, model=client.config.model
    )


def load_vectors(path: str | Path, metric: str = "inner_product", model: str = "") -> VectorStore:
    """Load precomputed vectors from JSONL lines ``{"id": ..., "vector": [...]}``."""
    ids: list[str] = []
    rows: list[list[float]] = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            obj = json.loads(line)
            if "id" not in obj or "vector" not in obj:
                raise ValueError(f"{path} line {lineno}: expected 'id' and 'vector' fields")
            ids.append(obj["id"])
            rows.append(obj["vector"])
    dims = {len(r) for r in rows}
    if len(dims) > 1:
        raise ValueError(f"{path}: inconsistent vector dimensions {sorted(dims)}")
    matrix = np.asarray(rows, dtype=np.float64) if rows else np.zeros((0, 0))
    return VectorStore(ids=ids, matrix=matrix, metric=metric, model=model)


def save_vectors(store: VectorStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for pid, row in zip(store.ids, store.matrix):
            obj = {"id": pid, "vector": [float(x) for x in row]}
            handle.write(json.dumps(obj) + "\n")


def dense_search(store: VectorStore, query: np.ndarray, k: int) -> list[ScoredPassage]:
    """Exact top-k by the store's metric, ties broken by passage id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if not len(store.ids):
        return []
    q = np.asarray(query, dtype=np.float64)
    if q.shape != (store.dim,):
        raise ValueError(f"query dimension {q.shape} does not match store dim {store.dim}")
    if store.metric == "cosine":
        norm = np.linalg.norm(q)
        if norm == 0:
            raise ValueError("cosine metric requires a non-zero query vector")
        q = q / norm
    scores = store.matrix @ q
    scored = [(pid, float(scores[i])) for i, pid in enumerate(store.ids)]
    return rank_scored(scored, k)


class DenseRetriever:
    """Embeds queries and searches a :class:`VectorStore` exactly."""

    def __init__(self, store: VectorStore, client: EmbeddingClient):
        self.store = store
        self.client = client

    @property
    def fingerprint(self) -> str:
        return (
            f"dense:model={self.store.model or self.client.config.model}"
            f":metric={self.store.metric}:N={len(self.store)}:dim={self.store.dim}"
        )

    def retrieve(self, query: str, top_k: int) -> list[ScoredPassage]:
        if not len(self.store):
            raise RuntimeError("vector store is empty; build or load vectors first")
        query_vec = self.client.embed_one(query, role="query")
        return dense_search(self.store, query_vec, top_k)


class HttpRerankClient:
    """Client for a cross-encoder scoring endpoint (``POST .../rerank``)."""

    def __init__(
        self,
        endpoint: str,
        model: str = "",
        timeout: float = 30.0,
        http: httpx.Client | None = None,
    ):
        if http is None:
            if endpoint.startswith("mock://"):
                from .mockserver import mock_http_client

                http = mock_http_client()
            else:
                http = httpx.Client(timeout=timeout)
        self._http = http
        self.model = model
        self._url = (
            "http://mock/v1/rerank"
            if endpoint.startswith("mock://")
            else endpoint.rstrip("/") + "/rerank"
        )

    def rerank(self, query: str, documents: list[str]) -> list[float]:
        payload = {"model": self.model, "query": query, "documents": documents}
        response = self._http.post(self._url, json=payload)
        if response.status_code != 200:
            raise EmbeddingError(f"rerank request failed with {response.status_code}")
        scores = response.json().get("scores")
        if scores is None or len(scores) != len(documents):
            raise EmbeddingError("rerank response does not match document count")
        return [float(s) for s in scores]


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))
