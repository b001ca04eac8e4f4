"""Generation-aspect and retrieval-aspect metrics with per-item reporting.

Answer normalization follows the standard QA recipe (lowercase, strip
punctuation, drop articles, collapse whitespace). ``accuracy`` is the
cover-match reading: a prediction is correct when any normalized gold
answer occurs as a contiguous token run inside it.
"""

from __future__ import annotations

import csv
import io
import json
import math
import string
from collections import Counter
from dataclasses import dataclass, field

_ARTICLES = {"a", "an", "the"}
_PUNCT = set(string.punctuation)


def normalize_answer(s: str) -> list[str]:
    """Lowercase, strip punctuation, drop articles, split on whitespace."""
    s = s.lower()
    s = "".join(ch for ch in s if ch not in _PUNCT)
    return [tok for tok in s.split() if tok not in _ARTICLES]


def exact_match(pred: str, golds: list[str]) -> float:
    """1.0 iff the normalized prediction equals any normalized gold."""
    _require_golds(golds)
    pred_toks = normalize_answer(pred)
    return float(any(pred_toks == normalize_answer(g) for g in golds))


def _contains_run(haystack: list[str], needle: list[str]) -> bool:
    if not needle:
        return True
    n = len(needle)
    return any(haystack[i : i + n] == needle for i in range(len(haystack) - n + 1))


def accuracy(pred: str, golds: list[str]) -> float:
    """1.0 iff any normalized gold occurs contiguously inside the prediction."""
    _require_golds(golds)
    pred_toks = normalize_answer(pred)
    return float(any(_contains_run(pred_toks, normalize_answer(g)) for g in golds))


def token_f1(pred: str, golds: list[str]) -> float:
    """Max over golds of the token-multiset F1 between prediction and gold."""
    _require_golds(golds)
    pred_toks = normalize_answer(pred)
    best = 0.0
    for gold in golds:
        gold_toks = normalize_answer(gold)
        if not pred_toks or not gold_toks:
            best = max(best, float(pred_toks == gold_toks))
            continue
        overlap = sum((Counter(pred_toks) & Counter(gold_toks)).values())
        if overlap == 0:
            continue
        p = overlap / len(pred_toks)
        r = overlap / len(gold_toks)
        best = max(best, 2 * p * r / (p + r))
    return best


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _bleu_single(pred_toks: list[str], gold_toks: list[str]) -> float:
    log_sum = 0.0
    for n in range(1, 5):
        pred_ngrams = _ngram_counts(pred_toks, n)
        gold_ngrams = _ngram_counts(gold_toks, n)
        total = sum(pred_ngrams.values())
        matched = sum(min(c, gold_ngrams[g]) for g, c in pred_ngrams.items())
        if matched == 0 or total == 0:
            # add-one smoothing keeps sentence-level BLEU defined
            p_n = (matched + 1) / (total + 1)
        else:
            p_n = matched / total
        log_sum += math.log(p_n)
    bleu = math.exp(log_sum / 4)
    c, r = len(pred_toks), len(gold_toks)
    if c < r:
        bleu *= math.exp(1 - r / c)
    return bleu


def bleu(pred: str, golds: list[str]) -> float:
    """Sentence-level BLEU-4 with add-one smoothing; max over golds."""
    _require_golds(golds)
    pred_toks = normalize_answer(pred)
    if not pred_toks:
        return 0.0
    return max(_bleu_single(pred_toks, normalize_answer(g)) for g in golds)


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0] * (len(b) + 1)
        for j, y in enumerate(b, 1):
            cur[j] = prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1])
        prev = cur
    return prev[-1]


def rouge_l(pred: str, golds: list[str]) -> float:
    """Token-level ROUGE-L F-measure; max over golds."""
    _require_golds(golds)
    pred_toks = normalize_answer(pred)
    best = 0.0
    for gold in golds:
        gold_toks = normalize_answer(gold)
        lcs = _lcs_length(pred_toks, gold_toks)
        if lcs == 0:
            continue
        p = lcs / len(pred_toks)
        r = lcs / len(gold_toks)
        best = max(best, 2 * p * r / (p + r))
    return best


def passage_has_answer(contents: str, golds: list[str]) -> bool:
    """Relevance label: any normalized gold occurs contiguously in the passage."""
    toks = normalize_answer(contents)
    return any(_contains_run(toks, g) for g in (normalize_answer(x) for x in golds) if g)


def retrieval_metrics(
    passage_texts: list[str],
    golds: list[str],
    k: int,
    set_recall: bool = False,
) -> dict[str, float]:
    """recall@k / precision@k / f1@k / AP over a ranked passage list.

    Relevance is answer presence. recall@k defaults to the binary
    answer-recall reading (1 iff any of the top-k is relevant); pass
    ``set_recall=True`` for fraction-of-relevant-found instead.
    """
    _require_golds(golds)
    relevant = [passage_has_answer(t, golds) for t in passage_texts]
    topk = relevant[:k]
    n_rel_topk = sum(topk)
    if set_recall:
        n_rel_all = sum(relevant)
        recall = n_rel_topk / n_rel_all if n_rel_all else 0.0
    else:
        recall = float(n_rel_topk > 0)
    precision = n_rel_topk / len(topk) if topk else 0.0
    f1 = 2 * recall * precision / (recall + precision) if recall + precision > 0 else 0.0
    hits = 0
    ap_terms = []
    for rank, rel in enumerate(topk, 1):
        if rel:
            hits += 1
            ap_terms.append(hits / rank)
    ap = sum(ap_terms) / len(ap_terms) if ap_terms else 0.0
    return {"recall": recall, "precision": precision, "f1": f1, "ap": ap}


GENERATION_METRICS = {
    "em": exact_match,
    "f1": token_f1,
    "accuracy": accuracy,
    "bleu": bleu,
    "rouge_l": rouge_l,
}

KNOWN_METRICS = sorted(GENERATION_METRICS) + ["retrieval"]


@dataclass
class MetricReport:
    """Aggregate and per-item metric values plus token-usage accounting."""

    aggregate: dict[str, float] = field(default_factory=dict)
    per_item: dict[str, dict[str, float]] = field(default_factory=dict)
    token_usage: dict = field(default_factory=dict)
    errors: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "aggregate": self.aggregate,
            "per_item": self.per_item,
            "token_usage": self.token_usage,
            "errors": self.errors,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def aggregate_csv(self) -> str:
        """One-row CSV of the aggregate metrics, for table building."""
        buf = io.StringIO()
        names = sorted(self.aggregate)
        writer = csv.writer(buf)
        writer.writerow(names)
        writer.writerow([self.aggregate[n] for n in names])
        return buf.getvalue()


def token_usage(traces: list) -> dict:
    """Sum prompt/generated token counts and refine deltas over traces.

    Refine fields are present only when at least one trace carries refine
    accounting (absence means no refiner was configured).
    """
    totals = {"prompt_tokens": 0, "generated_tokens": 0}
    per_item: dict[str, dict] = {}
    any_refine = False
    for trace in traces:
        usage = trace.token_usage()
        entry = {
            "prompt_tokens": usage["prompt_tokens"],
            "generated_tokens": usage["generated_tokens"],
        }
        totals["prompt_tokens"] += usage["prompt_tokens"]
        totals["generated_tokens"] += usage["generated_tokens"]
        if "refine_input_words" in usage:
            any_refine = True
            entry["refine_input_words"] = usage["refine_input_words"]
            entry["refine_output_words"] = usage["refine_output_words"]
            totals.setdefault("refine_input_words", 0)
            totals.setdefault("refine_output_words", 0)
            totals["refine_input_words"] += usage["refine_input_words"]
            totals["refine_output_words"] += usage["refine_output_words"]
        per_item[trace.item_id] = entry
    if any_refine:
        totals["refine_saved_words"] = totals["refine_input_words"] - totals["refine_output_words"]
    return {"totals": totals, "per_item": per_item}


def evaluate_traces(
    traces: list,
    items_by_id: dict,
    metrics: list[str],
    retrieval_k: int = 5,
) -> MetricReport:
    """Score every non-error trace against its item's golden answers."""
    unknown = [m for m in metrics if m not in GENERATION_METRICS and m != "retrieval"]
    if unknown:
        raise ValueError(f"unknown metrics: {unknown}; known: {KNOWN_METRICS}")
    report = MetricReport()
    report.errors = [
        {"item_id": t.item_id, "error": t.error} for t in traces if t.error
    ]
    scored = [t for t in traces if not t.error]
    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for trace in scored:
        item = items_by_id[trace.item_id]
        row: dict[str, float] = {}
        for name in metrics:
            if name == "retrieval":
                texts = trace.first_retrieval_texts()
                if texts is None:
                    continue
                rm = retrieval_metrics(texts, item.golden_answers, retrieval_k)
                for sub, val in rm.items():
                    row[f"retrieval_{sub}"] = val
            else:
                row[name] = GENERATION_METRICS[name](trace.final_answer, item.golden_answers)
        report.per_item[trace.item_id] = row
        for key, val in row.items():
            sums[key] = sums.get(key, 0.0) + val
            counts[key] = counts.get(key, 0) + 1
    report.aggregate = {k: sums[k] / counts[k] for k in sums}
    report.token_usage = token_usage(scored)
    return report


def _require_golds(golds: list[str]) -> None:
    if not golds:
        raise ValueError("golds must be non-empty")
