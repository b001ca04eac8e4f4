"""Pipeline topologies: the ways retrieval and generation can be wired up.

Seven topologies share one component bundle and one trace format:

- ``sequential``: retrieve once, optionally rerank/refine, answer. With no
  retriever configured this degrades to plain closed-book generation.
- ``conditional``: a judger decides per question whether to retrieve;
  otherwise answer closed-book.
- ``replug``: generate one candidate per passage, then pick the candidate
  with the highest retrieval-likelihood-weighted ensemble score.
- ``sure``: generate candidates per passage, summarize the evidence for
  each distinct candidate, and rank summaries by pairwise votes.
- ``iter_retgen``: alternate retrieval and generation, feeding each answer
  back into the next query. One iteration is exactly ``sequential``.
- ``self_ask``: decompose into follow-up questions, answering each from
  retrieved passages, until the model commits to a final answer.
- ``flare``: generate ahead, and whenever a sentence contains low-
  confidence tokens, retrieve with the confident remainder and regenerate
  from the accepted prefix.

Every run produces a :class:`~ragforge.trace.PipelineTrace`; failures are
captured per item (an ``error`` step plus the ``error`` field) so batch runs
always return one trace per input item, in input order.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable

from .corpus import Passage, PassageStore, split_sentences
from .dataset import Item
from .evaluate import normalize_answer
from .generate import (
    GenerationError,
    GenerationParams,
    GeneratorClient,
    PromptTemplate,
    UnsupportedCapabilityError,
    build_prompt,
    build_prompt_from_text,
    score_sequence,
)
from .judge import KnnJudger
from .retrieval import (
    Reranker,
    RetrievalCache,
    RetrievalRequest,
    Retriever,
    ScoredPassage,
    cached_retrieve,
    rerank,
    retrieve,
)
from .trace import PipelineTrace, TraceStep

TOPOLOGIES = (
    "sequential",
    "conditional",
    "replug",
    "sure",
    "iter_retgen",
    "self_ask",
    "flare",
)

SUMMARY_SYSTEM = (
    "Summarize evidence from the given passages that supports the candidate "
    "answer. Only output the summary."
)
SUMMARY_USER = (
    "Question: {question}\nCandidate answer: {candidate}\nPassages:\n{passages}\n"
    "Write a short summary of the evidence supporting the candidate answer."
)
VOTE_SYSTEM = "Compare the two evidence summaries. Reply with only 1 or 2."
VOTE_USER = (
    "Question: {question}\nSummary 1: {first}\nSummary 2: {second}\n"
    "Which summary better supports an answer to the question? Reply with 1 or 2."
)

SELF_ASK_SYSTEM = (
    "Answer questions by decomposing them into follow up questions when "
    "needed, using exactly this format:\n\n"
    "Question: Who lived longer, Muhammad Ali or Alan Turing?\n"
    "Are follow up questions needed here: Yes.\n"
    "Follow up: How old was Muhammad Ali when he died?\n"
    "Intermediate answer: Muhammad Ali was 74 years old when he died.\n"
    "Follow up: How old was Alan Turing when he died?\n"
    "Intermediate answer: Alan Turing was 41 years old when he died.\n"
    "So the final answer is: Muhammad Ali"
)
SELF_ASK_USER = "Question: {question}\nAre follow up questions needed here:"
FOLLOW_UP_MARKER = "Follow up:"
INTERMEDIATE_MARKER = "Intermediate answer:"
FINAL_MARKER = "So the final answer is:"


def softmax(values: list[float]) -> list[float]:
    """Numerically stable softmax; invariant to shifting all inputs."""
    if not values:
        return []
    shift = max(values)
    exps = [math.exp(v - shift) for v in values]
    total = sum(exps)
    return [e / total for e in exps]


@dataclass(frozen=True)
class PipelineConfig:
    """Topology choice plus the knobs each topology understands."""

    topology: str
    top_k: int = 5
    rerank_depth: int | None = None  # candidates fetched before reranking
    flare_theta: float = 0.8
    n_iter: int = 3
    max_rounds: int = 5
    params: GenerationParams = field(default_factory=GenerationParams)
    template: PromptTemplate | None = None

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise ValueError(
                f"unknown topology {self.topology!r}; expected one of {TOPOLOGIES}"
            )
        if self.top_k < 1:
            raise ValueError(f"top_k must be >= 1, got {self.top_k}")
        if not 0.0 <= self.flare_theta <= 1.0:
            raise ValueError(f"flare_theta must be in [0, 1], got {self.flare_theta}")
        if self.n_iter < 1:
            raise ValueError(f"n_iter must be >= 1, got {self.n_iter}")
        if self.max_rounds < 1:
            raise ValueError(f"max_rounds must be >= 1, got {self.max_rounds}")
        if self.rerank_depth is not None and self.rerank_depth < self.top_k:
            raise ValueError(
                f"rerank_depth ({self.rerank_depth}) must be >= top_k ({self.top_k})"
            )

    def to_dict(self) -> dict:
        out = {
            "topology": self.topology,
            "top_k": self.top_k,
            "flare_theta": self.flare_theta,
            "n_iter": self.n_iter,
            "max_rounds": self.max_rounds,
            "generation": {
                "max_input_tokens": self.params.max_input_tokens,
                "max_new_tokens": self.params.max_new_tokens,
                "temperature": self.params.temperature,
            },
        }
        if self.rerank_depth is not None:
            out["rerank_depth"] = self.rerank_depth
        return out


@dataclass
class PipelineComponents:
    """Everything a topology might need; topologies check what they require."""

    generator: GeneratorClient
    retriever: Retriever | None = None
    passages: PassageStore | None = None
    reranker: Reranker | None = None
    refiner: object | None = None  # .refine(question, passages) -> RefineResult
    judger: KnnJudger | None = None
    cache: RetrievalCache | None = None


def _require(value, name: str, topology: str):
    if value is None:
        raise ValueError(f"topology {topology!r} requires a {name}")
    return value


def _passage_records(passages: list[Passage], scored: list[ScoredPassage]) -> list[dict]:
    return [
        {
            "id": s.passage_id,
            "rank": s.rank,
            "score": round(s.score, 6),
            "title": p.title,
            "contents": p.contents,
        }
        for p, s in zip(passages, scored)
    ]


def _retrieve_step(
    config: PipelineConfig,
    components: PipelineComponents,
    trace: PipelineTrace,
    query: str,
    iteration: int | None = None,
) -> tuple[list[Passage], list[ScoredPassage]]:
    """Retrieve (optionally through the cache and reranker) and record steps."""
    retriever = _require(components.retriever, "retriever", config.topology)
    store = _require(components.passages, "passage store", config.topology)
    depth = config.rerank_depth or config.top_k
    fetch_k = depth if components.reranker is not None else config.top_k
    request = RetrievalRequest(query=query, top_k=fetch_k)

    started = time.perf_counter()
    if components.cache is not None:
        scored, cache_hit = cached_retrieve(components.cache, retriever, request)
    else:
        scored, cache_hit = retrieve(retriever, request), False
    elapsed = (time.perf_counter() - started) * 1000

    passages = []
    for s in scored:
        passage = store.get(s.passage_id)
        if passage is None:
            raise KeyError(f"retrieved passage {s.passage_id!r} is not in the passage store")
        passages.append(passage)
    trace.add(
        "retrieve",
        {
            "query": query,
            "top_k": fetch_k,
            "cache_hit": cache_hit,
            "results": _passage_records(passages, scored),
        },
        iteration=iteration,
        elapsed_ms=elapsed,
    )

    if components.reranker is not None and scored:
        reranked = rerank(components.reranker, query, scored, store.get)
        reranked = reranked[: config.top_k]
        passages = [store.get(s.passage_id) for s in reranked]
        trace.add(
            "rerank",
            {"query": query, "results": _passage_records(passages, reranked)},
            iteration=iteration,
        )
        scored = reranked
    return passages, scored


def _generate_step(
    components: PipelineComponents,
    trace: PipelineTrace,
    messages: list[dict],
    params: GenerationParams,
    purpose: str | None = None,
    iteration: int | None = None,
):
    trace.add("prompt", {"messages": messages}, iteration=iteration)
    started = time.perf_counter()
    output = components.generator.generate(messages, params)
    elapsed = (time.perf_counter() - started) * 1000
    payload = {
        "text": output.text,
        "prompt_tokens": output.prompt_tokens,
        "generated_tokens": output.token_count,
    }
    if purpose is not None:
        payload["purpose"] = purpose
    trace.add("generate", payload, iteration=iteration, elapsed_ms=elapsed)
    return output


def _prompt_over_passages(
    config: PipelineConfig,
    components: PipelineComponents,
    trace: PipelineTrace,
    question: str,
    passages: list[Passage],
    iteration: int | None = None,
) -> list[dict]:
    """Build the answer prompt, applying the refiner when there is context."""
    if components.refiner is not None and passages:
        started = time.perf_counter()
        result = components.refiner.refine(question, passages)
        elapsed = (time.perf_counter() - started) * 1000
        trace.add(
            "refine",
            {
                "method": result.method,
                "input_words": result.input_words,
                "output_words": result.output_words,
                "text": result.text,
            },
            iteration=iteration,
            elapsed_ms=elapsed,
        )
        return build_prompt_from_text(question, result.text, config.template)
    return build_prompt(question, passages, config.template)


def _finish(trace: PipelineTrace, answer: str) -> None:
    trace.final_answer = answer
    trace.add("final", {"answer": answer})


def run_sequential(
    item: Item, config: PipelineConfig, components: PipelineComponents, trace: PipelineTrace
) -> None:
    if components.retriever is not None:
        passages, _ = _retrieve_step(config, components, trace, item.question)
    else:
        passages = []
    messages = _prompt_over_passages(config, components, trace, item.question, passages)
    output = _generate_step(components, trace, messages, config.params)
    _finish(trace, output.text)


def run_conditional(
    item: Item, config: PipelineConfig, components: PipelineComponents, trace: PipelineTrace
) -> None:
    judger = _require(components.judger, "judger", config.topology)
    decision = judger.judge(item.question)
    trace.add("judger", {"decision": decision.decision, "evidence": decision.evidence})
    if decision.decision == "retrieve":
        passages, _ = _retrieve_step(config, components, trace, item.question)
    else:
        passages = []
    messages = _prompt_over_passages(config, components, trace, item.question, passages)
    output = _generate_step(components, trace, messages, config.params)
    _finish(trace, output.text)


def run_replug(
    item: Item, config: PipelineConfig, components: PipelineComponents, trace: PipelineTrace
) -> None:
    if not getattr(components.generator, "supports_scoring", False):
        raise UnsupportedCapabilityError(
            "replug needs a generator that can score sequences"
        )
    passages, scored = _retrieve_step(config, components, trace, item.question)
    weights = softmax([s.score for s in scored])

    prompts = [build_prompt(item.question, [p], config.template) for p in passages]
    candidates: list[str] = []  # unique, in generation order
    seen: set[str] = set()
    for messages in prompts:
        output = _generate_step(components, trace, messages, config.params, purpose="candidate")
        key = " ".join(normalize_answer(output.text))
        if key not in seen:
            seen.add(key)
            candidates.append(output.text)

    ensemble: list[float] = []
    scoring_calls = 0
    for candidate in candidates:
        length = len(candidate.split())
        if length == 0:
            ensemble.append(float("-inf"))
            continue
        total = 0.0
        for weight, messages in zip(weights, prompts):
            logprob = score_sequence(components.generator, messages, candidate)
            scoring_calls += 1
            total += weight * math.exp(logprob / length)
        ensemble.append(total)

    best = min(range(len(candidates)), key=lambda i: (-ensemble[i], i))
    trace.add(
        "rerank",
        {
            "purpose": "ensemble",
            "weights": [round(w, 6) for w in weights],
            "scoring_calls": scoring_calls,
            "candidates": [
                {"text": c, "score": round(s, 6) if s != float("-inf") else None}
                for c, s in zip(candidates, ensemble)
            ],
        },
    )
    _finish(trace, candidates[best])


def _parse_vote(text: str) -> int | None:
    for char in text:
        if char == "1":
            return 0
        if char == "2":
            return 1
    return None


def run_sure(
    item: Item, config: PipelineConfig, components: PipelineComponents, trace: PipelineTrace
) -> None:
    passages, _ = _retrieve_step(config, components, trace, item.question)

    candidates: list[str] = []
    seen: set[str] = set()
    for passage in passages:
        messages = build_prompt(item.question, [passage], config.template)
        output = _generate_step(components, trace, messages, config.params, purpose="candidate")
        key = " ".join(normalize_answer(output.text))
        if key not in seen:
            seen.add(key)
            candidates.append(output.text)

    if len(candidates) <= 1:
        _finish(trace, candidates[0] if candidates else "")
        return

    docs = "\n".join(
        f"Doc {i} (Title: {p.title}) {p.contents}" for i, p in enumerate(passages, 1)
    )
    summaries: list[str] = []
    for candidate in candidates:
        messages = [
            {"role": "system", "content": SUMMARY_SYSTEM},
            {
                "role": "user",
                "content": SUMMARY_USER.format(
                    question=item.question, candidate=candidate, passages=docs
                ),
            },
        ]
        output = _generate_step(
            components, trace, messages, replace(config.params, max_new_tokens=96),
            purpose="summary",
        )
        summaries.append(output.text)

    votes = [0] * len(candidates)
    for i in range(len(candidates)):
        for j in range(i + 1, len(candidates)):
            messages = [
                {"role": "system", "content": VOTE_SYSTEM},
                {
                    "role": "user",
                    "content": VOTE_USER.format(
                        question=item.question, first=summaries[i], second=summaries[j]
                    ),
                },
            ]
            output = _generate_step(
                components, trace, messages, replace(config.params, max_new_tokens=4),
                purpose="vote",
            )
            vote = _parse_vote(output.text)
            if vote is None:
                trace.flag("vote_unparsed")
                continue
            votes[(i, j)[vote]] += 1

    winner = min(range(len(candidates)), key=lambda i: (-votes[i], i))
    trace.add(
        "rerank",
        {
            "purpose": "pairwise_votes",
            "candidates": [
                {"text": c, "votes": v} for c, v in zip(candidates, votes)
            ],
        },
    )
    _finish(trace, candidates[winner])


def run_iter_retgen(
    item: Item, config: PipelineConfig, components: PipelineComponents, trace: PipelineTrace
) -> None:
    if config.n_iter == 1:
        run_sequential(item, config, components, trace)
        return
    query = item.question
    answer = ""
    for iteration in range(1, config.n_iter + 1):
        trace.add("iteration", {"index": iteration, "query": query}, iteration=iteration)
        passages, _ = _retrieve_step(config, components, trace, query, iteration=iteration)
        messages = _prompt_over_passages(
            config, components, trace, item.question, passages, iteration=iteration
        )
        output = _generate_step(components, trace, messages, config.params, iteration=iteration)
        answer = output.text
        query = f"{item.question} {answer}"
    _finish(trace, answer)


def _first_line(text: str) -> str:
    return text.split("\n", 1)[0].strip()


def run_self_ask(
    item: Item, config: PipelineConfig, components: PipelineComponents, trace: PipelineTrace
) -> None:
    scratchpad = ""
    intermediates: list[str] = []
    last_text = ""
    params = replace(config.params, stop=(INTERMEDIATE_MARKER,), max_new_tokens=128)

    for round_no in range(1, config.max_rounds + 1):
        messages = [
            {"role": "system", "content": SELF_ASK_SYSTEM},
            {"role": "user", "content": SELF_ASK_USER.format(question=item.question)},
        ]
        if scratchpad:
            messages.append({"role": "assistant", "content": scratchpad})
        output = _generate_step(
            components, trace, messages, params, purpose="scratchpad", iteration=round_no
        )
        text = output.text
        last_text = text

        final_pos = text.find(FINAL_MARKER)
        follow_pos = text.find(FOLLOW_UP_MARKER)
        if final_pos != -1 and (follow_pos == -1 or final_pos < follow_pos):
            _finish(trace, text[final_pos + len(FINAL_MARKER) :].strip())
            return
        if follow_pos == -1:
            trace.flag("unparsed")
            _finish(trace, text.strip())
            return

        follow_up = _first_line(text[follow_pos + len(FOLLOW_UP_MARKER) :])
        passages, _ = _retrieve_step(
            config, components, trace, follow_up, iteration=round_no
        )
        sub_messages = build_prompt(follow_up, passages, config.template)
        sub_output = _generate_step(
            components, trace, sub_messages, config.params,
            purpose="intermediate", iteration=round_no,
        )
        intermediates.append(sub_output.text)
        kept = text[: follow_pos + len(FOLLOW_UP_MARKER)] + " " + follow_up
        scratchpad = (
            scratchpad + ("\n" if scratchpad else "")
            + kept + f"\n{INTERMEDIATE_MARKER} {sub_output.text}"
        )

    trace.flag("truncated")
    _finish(trace, intermediates[-1] if intermediates else last_text.strip())


def _align_sentence_tokens(
    entries: list[tuple[str, float]], sentences: list[str]
) -> list[list[tuple[str, float]]]:
    """Assign the generator's tokens to sentence boundaries by characters."""
    out: list[list[tuple[str, float]]] = []
    ei = 0
    for sentence in sentences:
        target = "".join(sentence.split())
        acc = ""
        toks: list[tuple[str, float]] = []
        while ei < len(entries) and len(acc) < len(target):
            token, logprob = entries[ei]
            ei += 1
            piece = "".join(token.split())
            if not piece:
                continue
            toks.append((token, logprob))
            acc += piece
        if acc != target:
            raise GenerationError(
                "generator tokens do not align with sentence segmentation"
            )
        out.append(toks)
    return out


def run_flare(
    item: Item, config: PipelineConfig, components: PipelineComponents, trace: PipelineTrace
) -> None:
    if not getattr(components.generator, "supports_logprobs", False):
        raise UnsupportedCapabilityError("flare needs a generator with token logprobs")

    theta = config.flare_theta
    params = replace(config.params, logprobs=True)
    accepted = ""
    passages: list[Passage] = []
    force_accept_first = False
    retrieved_any = False
    final: str | None = None

    for round_no in range(1, config.max_rounds + 1):
        iteration = round_no if round_no > 1 else None
        messages = build_prompt(item.question, passages, config.template)
        if accepted:
            messages = messages + [{"role": "assistant", "content": accepted}]
        output = _generate_step(
            components, trace, messages, params, iteration=iteration
        )
        text = output.text
        if not text.strip():
            final = accepted
            break

        sentences = split_sentences(text)
        aligned = _align_sentence_tokens(output.token_logprobs or [], sentences)
        triggered = False
        for index, (sentence, tokens) in enumerate(zip(sentences, aligned)):
            if force_accept_first and index == 0:
                accepted = f"{accepted} {sentence}" if accepted else sentence
                continue
            min_prob = min((math.exp(lp) for _, lp in tokens), default=1.0)
            if min_prob < theta:
                confident = [tok for tok, lp in tokens if math.exp(lp) >= theta]
                query = " ".join(confident).strip() or sentence
                passages, _ = _retrieve_step(
                    config, components, trace, query, iteration=round_no
                )
                triggered = True
                retrieved_any = True
                break
            accepted = f"{accepted} {sentence}" if accepted else sentence
        force_accept_first = triggered
        if not triggered:
            final = accepted if retrieved_any else text
            break

    if final is None:
        trace.flag("truncated")
        final = accepted
    _finish(trace, final)


_RUNNERS: dict[str, Callable] = {
    "sequential": run_sequential,
    "conditional": run_conditional,
    "replug": run_replug,
    "sure": run_sure,
    "iter_retgen": run_iter_retgen,
    "self_ask": run_self_ask,
    "flare": run_flare,
}


def run_item(
    item: Item,
    config: PipelineConfig,
    components: PipelineComponents,
    on_step: Callable[[str, TraceStep], None] | None = None,
) -> PipelineTrace:
    """Run one item, capturing any failure in the trace instead of raising."""
    trace = PipelineTrace(item_id=item.id, question=item.question)
    if on_step is not None:
        trace.listener = lambda step: on_step(item.id, step)
    try:
        _RUNNERS[config.topology](item, config, components, trace)
    except Exception as exc:  # noqa: BLE001 - per-item fail-soft by design
        trace.error = f"{type(exc).__name__}: {exc}"
        trace.add("error", {"message": trace.error})
    return trace


def run_batch(
    items: list[Item],
    config: PipelineConfig,
    components: PipelineComponents,
    on_step: Callable[[str, TraceStep], None] | None = None,
    max_workers: int = 1,
) -> list[PipelineTrace]:
    """Run all items, returning traces in input order."""
    if max_workers <= 1:
        return [run_item(item, config, components, on_step) for item in items]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(
            pool.map(lambda item: run_item(item, config, components, on_step), items)
        )


_TOP_K = {
    "type": "integer",
    "default": 5,
    "minimum": 1,
    "description": "Passages to retrieve per query.",
}

PIPELINE_SPECS: dict[str, dict] = {
    "sequential": {
        "description": "Retrieve once, optionally refine, then answer.",
        "params": {"top_k": _TOP_K},
    },
    "conditional": {
        "description": "A judger decides per question whether to retrieve.",
        "params": {"top_k": _TOP_K},
    },
    "replug": {
        "description": "Ensemble candidate answers weighted by retrieval scores.",
        "params": {"top_k": _TOP_K},
    },
    "sure": {
        "description": "Summarize evidence per candidate answer and rank by votes.",
        "params": {"top_k": _TOP_K},
    },
    "iter_retgen": {
        "description": "Feed each answer back into the next retrieval query.",
        "params": {
            "top_k": _TOP_K,
            "n_iter": {
                "type": "integer",
                "default": 3,
                "minimum": 1,
                "description": "Retrieval-generation iterations.",
            },
        },
    },
    "self_ask": {
        "description": "Decompose into follow-up questions answered from passages.",
        "params": {
            "top_k": _TOP_K,
            "max_rounds": {
                "type": "integer",
                "default": 5,
                "minimum": 1,
                "description": "Maximum follow-up rounds before truncation.",
            },
        },
    },
    "flare": {
        "description": "Regenerate with fresh passages at low-confidence sentences.",
        "params": {
            "top_k": _TOP_K,
            "flare_theta": {
                "type": "number",
                "default": 0.8,
                "minimum": 0.0,
                "maximum": 1.0,
                "description": "Token-probability threshold that triggers retrieval.",
            },
            "max_rounds": {
                "type": "integer",
                "default": 5,
                "minimum": 1,
                "description": "Maximum regeneration rounds.",
            },
        },
    },
}
