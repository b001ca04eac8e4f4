"""Context refiners: compress retrieved passages before prompting.

Three strategies, one interface. Each takes the question plus the retrieved
passages and returns a single refined reference text along with word-count
accounting (so reports can show how much context was saved):

- extractive: keep the sentences most similar to the question, under a
  word budget, preserving original order;
- perplexity: drop the least informative words (lowest self-information
  under the generator), keeping sentence-final words as structure anchors;
- abstractive: ask a generator to summarize the passages for the question.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import Passage, split_sentences
from .dense import EmbeddingClient
from .generate import GenerationParams, HttpGeneratorClient

DEFAULT_BUDGET_RATIO = 0.55

ABSTRACTIVE_SYSTEM = (
    "Summarize the given passages, keeping exactly the information needed to "
    "answer the question. Only output the summary and do not output any other words."
)
ABSTRACTIVE_USER = "Question: {question}\nPassages:\n{passages}\nSummary:"


class RefineError(RuntimeError):
    """Raised when a refiner cannot produce output for its input."""


@dataclass
class RefineResult:
    """Refined reference text plus before/after word counts."""

    text: str
    input_words: int
    output_words: int
    method: str


def _total_words(texts: list[str]) -> int:
    return sum(len(t.split()) for t in texts)


def extractive_refine(
    query: str,
    texts: list[str],
    client: EmbeddingClient,
    word_budget: int | None = None,
    budget_ratio: float = DEFAULT_BUDGET_RATIO,
) -> str:
    """Greedy sentence selection by similarity to the query.

    Sentences are pooled across all texts, ranked by cosine similarity to
    the query embedding, and kept greedily until adding the next-ranked
    sentence would exceed the word budget (selection stops there, even if a
    later, shorter sentence would still fit). Kept sentences are emitted in
    their original order.
    """
    sentences = [s for text in texts for s in split_sentences(text)]
    if not sentences:
        return ""
    if word_budget is None:
        word_budget = math.ceil(budget_ratio * _total_words(texts))
    query_vec = client.embed_one(query, role="query")
    matrix = client.embed(sentences, role="passage")
    q_norm = np.linalg.norm(query_vec)
    row_norms = np.linalg.norm(matrix, axis=1)
    denom = np.where(row_norms * q_norm == 0, 1.0, row_norms * q_norm)
    sims = (matrix @ query_vec) / denom

    order = sorted(range(len(sentences)), key=lambda i: (-sims[i], i))
    kept: list[int] = []
    used = 0
    for i in order:
        cost = len(sentences[i].split())
        if used + cost > word_budget:
            break
        kept.append(i)
        used += cost
    return " ".join(sentences[i] for i in sorted(kept))


def _word_self_information(
    entries: list[tuple[str, float]], words: list[str]
) -> list[float]:
    """Max negative logprob over each word's tokens, aligned by characters."""
    result: list[float] = []
    ei = 0
    for word in words:
        acc = ""
        best: float | None = None
        while ei < len(entries) and len(acc) < len(word):
            token, logprob = entries[ei]
            piece = "".join(token.split())
            ei += 1
            if not piece:
                continue
            acc += piece
            info = -logprob
            best = info if best is None else max(best, info)
        if acc != word:
            raise RefineError(
                "generator tokens do not align with whitespace words; "
                "perplexity refining requires token boundaries inside words only"
            )
        result.append(best if best is not None else 0.0)
    return result


def perplexity_refine(
    texts: list[str], keep_ratio: float, client: HttpGeneratorClient
) -> str:
    """Keep the ``ceil(keep_ratio * n)`` most informative words.

    Self-information comes from echoing the text through the generator and
    taking each word's highest per-token surprisal. Words that close a
    sentence (ending with ``.``, ``!`` or ``?``) are always kept so the
    output stays readable; they count against the keep budget. Ties keep the
    earlier word. The output is always a subsequence of the input words, and
    ``keep_ratio=1`` returns the input unchanged.
    """
    if not 0 < keep_ratio <= 1:
        raise ValueError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
    text = "\n".join(texts)
    words = text.split()
    if not words:
        return ""
    if keep_ratio == 1:
        return text

    entries = client.echo_logprobs([{"role": "user", "content": text}])
    info = _word_self_information(entries, words)
    protected = {i for i, w in enumerate(words) if w.endswith((".", "!", "?"))}
    target = math.ceil(keep_ratio * len(words))
    remaining = target - len(protected)
    chosen: set[int] = set(protected)
    if remaining > 0:
        candidates = sorted(
            (i for i in range(len(words)) if i not in protected),
            key=lambda i: (-info[i], i),
        )
        chosen.update(candidates[:remaining])
    return " ".join(words[i] for i in sorted(chosen))


def abstractive_refine(
    question: str,
    texts: list[str],
    client: HttpGeneratorClient,
    max_tokens: int = 64,
) -> str:
    """One summarization call over all passages; empty input skips the call."""
    if not texts:
        return ""
    messages = [
        {"role": "system", "content": ABSTRACTIVE_SYSTEM},
        {"role": "user", "content": ABSTRACTIVE_USER.format(
            question=question, passages="\n".join(texts)
        )},
    ]
    params = GenerationParams(max_new_tokens=max_tokens)
    return client.generate(messages, params).text


class ExtractiveRefiner:
    method = "extractive"

    def __init__(
        self,
        client: EmbeddingClient,
        word_budget: int | None = None,
        budget_ratio: float = DEFAULT_BUDGET_RATIO,
    ):
        self.client = client
        self.word_budget = word_budget
        self.budget_ratio = budget_ratio

    def refine(self, question: str, passages: list[Passage]) -> RefineResult:
        texts = [p.contents for p in passages]
        text = extractive_refine(
            question, texts, self.client, self.word_budget, self.budget_ratio
        )
        return RefineResult(text, _total_words(texts), len(text.split()), self.method)


class PerplexityRefiner:
    method = "perplexity"

    def __init__(self, client: HttpGeneratorClient, keep_ratio: float = 0.5):
        if not 0 < keep_ratio <= 1:
            raise ValueError(f"keep_ratio must be in (0, 1], got {keep_ratio}")
        self.client = client
        self.keep_ratio = keep_ratio

    def refine(self, question: str, passages: list[Passage]) -> RefineResult:
        texts = [p.contents for p in passages]
        text = perplexity_refine(texts, self.keep_ratio, self.client)
        return RefineResult(text, _total_words(texts), len(text.split()), self.method)


class AbstractiveRefiner:
    method = "abstractive"

    def __init__(self, client: HttpGeneratorClient, max_tokens: int = 64):
        self.client = client
        self.max_tokens = max_tokens

    def refine(self, question: str, passages: list[Passage]) -> RefineResult:
        texts = [p.contents for p in passages]
        text = abstractive_refine(question, texts, self.client, self.max_tokens)
        return RefineResult(text, _total_words(texts), len(text.split()), self.method)
