"""Deterministic mock model services for tests, demos, and offline runs.

One set of pure payload-level functions backs both the FastAPI app (for
real serving: ``python -m ragforge.mockserver``) and an in-process httpx
transport, so ``mock://`` endpoints exercise exactly the same wire payloads
as a remote service.

Behavior is a pure function of the request body:
- chat completions extract ``the answer is X`` from the supplied passages,
  continue greedily from a trailing assistant prefix, honor stop sequences
  and max_tokens, and emit hash-derived token logprobs in (0, 1);
- echo mode returns per-token logprobs for the whole prompt, scoring tokens
  higher when they appear in the context (grounded continuations win);
- embeddings are unit-normalized bags of hashed token vectors, so texts
  sharing words are similar and identical texts are identical.
"""

from __future__ import annotations

import hashlib
import json
import math
import re

import httpx
import numpy as np

from .bm25 import analyze

EMBEDDING_DIM = 32

_ANSWER_RE = re.compile(r"the answer is ([^.\n]+)", re.IGNORECASE)
_FALLBACK_ANSWER = "I do not know."

_token_vectors: dict[str, np.ndarray] = {}


def _hash_unit(value: str) -> float:
    """Deterministic float in [0, 1) from a string, stable across processes."""
    digest = hashlib.sha256(value.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def _token_vector(token: str) -> np.ndarray:
    vec = _token_vectors.get(token)
    if vec is None:
        seed = int.from_bytes(hashlib.sha256(token.encode("utf-8")).digest()[:8], "big")
        vec = np.random.default_rng(seed).standard_normal(EMBEDDING_DIM)
        _token_vectors[token] = vec
    return vec


def embed_text(text: str) -> list[float]:
    tokens = analyze(text) or ["<empty>"]
    vec = np.zeros(EMBEDDING_DIM)
    for tok in tokens:
        vec += _token_vector(tok)
    norm = np.linalg.norm(vec)
    if norm == 0:
        vec = _token_vector("<zero>")
        norm = np.linalg.norm(vec)
    return [float(x) for x in vec / norm]


def _full_answer(messages: list[dict]) -> str:
    joined = "\n".join(m.get("content", "") for m in messages)
    if "Reply with 1 or 2" in joined:
        return "1" if _hash_unit(f"vote|{joined}") < 0.5 else "2"
    for message in messages:
        match = _ANSWER_RE.search(message.get("content", ""))
        if match:
            return match.group(1).strip()
    return _FALLBACK_ANSWER


def _completion_logprob(token: str, index: int) -> float:
    # probability strictly inside (0.30, 0.99): never certain, never zero
    p = 0.30 + 0.69 * _hash_unit(f"gen|{token}|{index}")
    return math.log(p)


def _echo_logprob(token: str, index: int, context: str) -> float:
    jitter = 0.5 * _hash_unit(f"echo|{token}|{index}")
    if token.lower() in context:
        return -0.1 - jitter
    return -1.0 - jitter


def mock_chat_completion(body: dict) -> dict:
    messages = list(body.get("messages", []))
    if body.get("echo"):
        context = " ".join(m.get("content", "") for m in messages[:-1]).lower()
        tokens = [tok for m in messages for tok in m.get("content", "").split()]
        content = [
            {"token": tok, "logprob": _echo_logprob(tok, i, context)}
            for i, tok in enumerate(tokens)
        ]
        return {
            "model": body.get("model", "mock"),
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": ""},
                    "logprobs": {"content": content},
                    "finish_reason": "stop",
                }
            ],
            "usage": {"prompt_tokens": len(tokens), "completion_tokens": 0},
        }

    prefix = ""
    if messages and messages[-1].get("role") == "assistant":
        prefix = messages[-1].get("content", "")
        messages = messages[:-1]
    text = _full_answer(messages)
    if prefix:
        text = text[len(prefix) :] if text.startswith(prefix) else ""
        text = text.lstrip()

    for stop in body.get("stop") or []:
        cut = text.find(stop)
        if cut != -1:
            text = text[:cut]
    max_tokens = body.get("max_tokens")
    tokens = text.split()
    if max_tokens is not None and len(tokens) > max_tokens:
        tokens = tokens[:max_tokens]
        text = " ".join(tokens)

    choice: dict = {
        "index": 0,
        "message": {"role": "assistant", "content": text},
        "finish_reason": "stop",
    }
    if body.get("logprobs"):
        choice["logprobs"] = {
            "content": [
                {"token": tok, "logprob": _completion_logprob(tok, i)}
                for i, tok in enumerate(tokens)
            ]
        }
    prompt_tokens = sum(len(m.get("content", "").split()) for m in body.get("messages", []))
    return {
        "model": body.get("model", "mock"),
        "choices": [choice],
        "usage": {"prompt_tokens": prompt_tokens, "completion_tokens": len(tokens)},
    }


def mock_embeddings(body: dict) -> dict:
    texts = body.get("input", [])
    return {
        "model": body.get("model", "mock-embed"),
        "data": [{"index": i, "embedding": embed_text(t)} for i, t in enumerate(texts)],
        "usage": {"prompt_tokens": sum(len(t.split()) for t in texts)},
    }


def mock_rerank(body: dict) -> dict:
    query_tokens = set(analyze(body.get("query", "")))
    scores = []
    for doc in body.get("documents", []):
        doc_tokens = set(analyze(doc))
        union = query_tokens | doc_tokens
        scores.append(len(query_tokens & doc_tokens) / len(union) if union else 0.0)
    return {"scores": scores}


class MockServiceTransport(httpx.BaseTransport):
    """Routes OpenAI-shaped requests to the mock functions, no sockets."""

    def __init__(self):
        self.request_count = 0

    def handle_request(self, request: httpx.Request) -> httpx.Response:
        self.request_count += 1
        path = request.url.path
        body = json.loads(request.content) if request.content else {}
        if path.endswith("/chat/completions"):
            return httpx.Response(200, json=mock_chat_completion(body))
        if path.endswith("/embeddings"):
            return httpx.Response(200, json=mock_embeddings(body))
        if path.endswith("/rerank"):
            return httpx.Response(200, json=mock_rerank(body))
        return httpx.Response(404, json={"error": {"message": f"no mock route for {path}"}})


def mock_http_client() -> httpx.Client:
    return httpx.Client(transport=MockServiceTransport(), base_url="http://mock")


def create_mock_app():
    """FastAPI app exposing the mock services over real HTTP."""
    from fastapi import FastAPI

    app = FastAPI(title="ragforge mock services")

    @app.post("/v1/chat/completions")
    async def chat(body: dict):
        return mock_chat_completion(body)

    @app.post("/v1/embeddings")
    async def embeddings(body: dict):
        return mock_embeddings(body)

    @app.post("/v1/rerank")
    async def rerank(body: dict):
        return mock_rerank(body)

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    return app


def main(argv: list[str] | None = None) -> None:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="Serve the deterministic mock model services")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8091)
    args = parser.parse_args(argv)
    uvicorn.run(create_mock_app(), host=args.host, port=args.port, log_level="warning")


if __name__ == "__main__":
    main()
