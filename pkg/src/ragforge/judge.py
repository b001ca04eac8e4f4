"""Adaptive retrieval judging: decide per question whether to retrieve.

A k-nearest-neighbor vote over a labeled training set of questions. Each
training question carries a label saying whether retrieval helped it; a new
question inherits the majority label of its k most similar training
questions (cosine over embeddings). Ties err on the side of retrieving.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dense import EmbeddingClient

LABELS = ("retrieve", "no_retrieve")


class JudgeError(ValueError):
    """Raised for malformed training data or unusable configurations."""


@dataclass(frozen=True)
class JudgeExample:
    question: str
    label: str

    def __post_init__(self):
        if self.label not in LABELS:
            raise JudgeError(f"label must be one of {LABELS}, got {self.label!r}")


@dataclass
class JudgeDecision:
    decision: str
    evidence: list[dict]  # [{"question", "label", "similarity"}] for the trace


def load_judge_examples(path: str | Path) -> list[JudgeExample]:
    """Load training examples from JSONL lines ``{"question", "label"}``."""
    examples = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise JudgeError(f"{path} line {lineno}: invalid JSON: {exc}") from exc
            for key in ("question", "label"):
                if key not in obj:
                    raise JudgeError(f"{path} line {lineno}: missing field {key!r}")
            examples.append(JudgeExample(question=obj["question"], label=obj["label"]))
    return examples


class KnnJudger:
    """Majority vote among the k most similar training questions."""

    def __init__(self, client: EmbeddingClient, examples: list[JudgeExample], k: int = 5):
        if k < 1:
            raise JudgeError(f"k must be >= 1, got {k}")
        if len(examples) < k:
            raise JudgeError(
                f"need at least k={k} training examples, got {len(examples)}"
            )
        self.client = client
        self.examples = list(examples)
        self.k = k
        matrix = client.embed([e.question for e in self.examples], role="query")
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        self._matrix = matrix / norms

    def judge(self, question: str) -> JudgeDecision:
        query = self.client.embed_one(question, role="query")
        norm = np.linalg.norm(query)
        if norm > 0:
            query = query / norm
        sims = self._matrix @ query
        # order independent of training-file order: ties fall back to text
        order = sorted(
            range(len(self.examples)),
            key=lambda i: (-sims[i], self.examples[i].question, self.examples[i].label),
        )
        top = order[: self.k]
        votes = sum(1 if self.examples[i].label == "retrieve" else -1 for i in top)
        decision = "retrieve" if votes >= 0 else "no_retrieve"
        evidence = [
            {
                "question": self.examples[i].question,
                "label": self.examples[i].label,
                "similarity": round(float(sims[i]), 6),
            }
            for i in top
        ]
        return JudgeDecision(decision=decision, evidence=evidence)
