"""Experiment runner: config in, run directory out.

A run materializes as ``<out_dir>/<run_id>/`` containing:

- ``manifest.json`` — the normalized config, component fingerprints,
  dataset/corpus provenance, timings, and cache statistics;
- ``traces.jsonl`` — one deterministic trace per item, in dataset order;
- ``report.json`` — aggregate and per-item metrics plus token usage.

Given the same inputs and components, ``traces.jsonl`` and ``report.json``
are byte-identical across runs; the manifest carries the volatile parts
(timestamps, wall time). An existing run directory is never overwritten
unless ``force`` is passed.
"""

from __future__ import annotations

import copy
import json
import shutil
import sys
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

from . import __version__
from .bm25 import BM25Params, BM25Retriever, InvertedIndex, build_index
from .config import ConfigError, apply_override, validate_config
from .corpus import PassageStore, load_corpus
from .dataset import Dataset, load_dataset, select
from .dense import (
    DenseRetriever,
    EmbeddingClient,
    EmbeddingConfig,
    HttpRerankClient,
    build_vector_store,
    load_vectors,
)
from .evaluate import MetricReport, evaluate_traces
from .generate import GenerationParams, PromptTemplate, make_generator_client
from .judge import KnnJudger, load_judge_examples
from .pipelines import PipelineComponents, PipelineConfig, run_batch
from .refine import AbstractiveRefiner, ExtractiveRefiner, PerplexityRefiner
from .retrieval import (
    EXTERNAL_FINGERPRINT,
    BiEncoderReranker,
    RemoteReranker,
    RetrievalCache,
    import_external_cache,
)
from .trace import PipelineTrace, save_traces


class RunExistsError(RuntimeError):
    """The run directory already exists and force was not given."""


class _ExternalOnlyRetriever:
    """Serves queries only from an imported external cache."""

    fingerprint = EXTERNAL_FINGERPRINT

    def retrieve(self, query: str, top_k: int):
        raise RuntimeError(f"query not present in the imported external cache: {query!r}")


@dataclass
class RunResult:
    run_id: str
    run_dir: Path
    manifest: dict
    traces: list[PipelineTrace]
    report: MetricReport


def load_items(cfg: dict) -> Dataset:
    """Load the configured dataset split and apply sampling."""
    section = cfg["dataset"]
    ds = load_dataset(section["path"], section["split"], name=section["name"])
    if section["sample"] is not None and section["sample"] < len(ds):
        ds = select(ds, section["sample_mode"], section["sample"], seed=cfg["seed"])
    return ds


def _embedding_client(cfg: dict) -> EmbeddingClient:
    section = cfg["embedding"]
    return EmbeddingClient(
        EmbeddingConfig(
            endpoint=section["endpoint"],
            model=section["model"],
            batch_size=section["batch_size"],
            query_prefix=section["query_prefix"],
            passage_prefix=section["passage_prefix"],
            timeout=section["timeout"],
        )
    )


def build_components(
    cfg: dict, store: PassageStore | None = None
) -> tuple[PipelineComponents, PipelineConfig]:
    """Construct every component the configured pipeline needs."""
    cfg = validate_config(cfg)
    if store is None:
        store = load_corpus(cfg["corpus"]["path"])

    embed_client: EmbeddingClient | None = None

    def embedder() -> EmbeddingClient:
        nonlocal embed_client
        if embed_client is None:
            embed_client = _embedding_client(cfg)
        return embed_client

    retrieval = cfg["retrieval"]
    cache: RetrievalCache | None = None
    if retrieval["cache_path"] and Path(retrieval["cache_path"]).exists():
        cache = RetrievalCache.load(retrieval["cache_path"])
    elif retrieval["cache_path"] or retrieval["external_cache"]:
        cache = RetrievalCache()
    if retrieval["external_cache"]:
        for passage in import_external_cache(cache, retrieval["external_cache"]).values():
            if passage.id not in store:
                store.add(passage)

    method = retrieval["method"]
    if method == "bm25":
        bm25_cfg = retrieval["bm25"]
        index_path = bm25_cfg["index_path"]
        if index_path and Path(index_path).exists():
            index = InvertedIndex.from_jsonl(index_path)
        else:
            index = build_index(store)
        retriever = BM25Retriever(
            index, BM25Params(k1=float(bm25_cfg["k1"]), b=float(bm25_cfg["b"]))
        )
    elif method == "dense":
        dense_cfg = retrieval["dense"]
        if dense_cfg["vectors_path"]:
            vstore = load_vectors(
                dense_cfg["vectors_path"],
                metric=dense_cfg["metric"],
                model=cfg["embedding"]["model"],
            )
        else:
            vstore = build_vector_store(store, embedder(), metric=dense_cfg["metric"])
        retriever = DenseRetriever(vstore, embedder())
    elif method == "external":
        retriever = _ExternalOnlyRetriever()
    else:
        retriever = None

    reranker = None
    if retrieval["rerank"]["method"] == "bi_encoder":
        reranker = BiEncoderReranker(embedder())
    elif retrieval["rerank"]["method"] == "remote":
        reranker = RemoteReranker(
            HttpRerankClient(
                retrieval["rerank"]["endpoint"],
                model=retrieval["rerank"]["model"] or "",
            )
        )

    gen_cfg = cfg["generator"]
    generator = make_generator_client(
        gen_cfg["endpoint"],
        gen_cfg["model"],
        timeout=gen_cfg["timeout"],
        max_retries=gen_cfg["max_retries"],
    )
    params = GenerationParams(
        max_input_tokens=gen_cfg["max_input_tokens"],
        max_new_tokens=gen_cfg["max_new_tokens"],
        temperature=float(gen_cfg["temperature"]),
    )

    refine_cfg = cfg["refine"]
    refiner = None
    if refine_cfg["method"] == "extractive":
        refiner = ExtractiveRefiner(
            embedder(),
            word_budget=refine_cfg["word_budget"],
            budget_ratio=float(refine_cfg["budget_ratio"]),
        )
    elif refine_cfg["method"] == "perplexity":
        refiner = PerplexityRefiner(generator, keep_ratio=float(refine_cfg["keep_ratio"]))
    elif refine_cfg["method"] == "abstractive":
        refiner = AbstractiveRefiner(generator, max_tokens=refine_cfg["max_tokens"])

    judger = None
    if cfg["judge"]["training_path"]:
        examples = load_judge_examples(cfg["judge"]["training_path"])
        judger = KnnJudger(embedder(), examples, k=cfg["judge"]["k"])

    pipe_cfg = cfg["pipeline"]
    pipeline_config = PipelineConfig(
        topology=pipe_cfg["topology"],
        top_k=pipe_cfg["top_k"],
        rerank_depth=retrieval["rerank"]["depth"],
        flare_theta=float(pipe_cfg["flare_theta"]),
        n_iter=pipe_cfg["n_iter"],
        max_rounds=pipe_cfg["max_rounds"],
        params=params,
    )

    components = PipelineComponents(
        generator=generator,
        retriever=retriever,
        passages=store,
        reranker=reranker,
        refiner=refiner,
        judger=judger,
        cache=cache,
    )
    return components, pipeline_config


def derive_run_id(cfg: dict) -> str:
    if cfg["run_id"]:
        return cfg["run_id"]
    stem = Path(cfg["dataset"]["path"]).stem
    return f"{stem}_{cfg['pipeline']['topology']}"


def _prepare_run_dir(out_dir: Path, run_id: str, force: bool) -> Path:
    run_dir = out_dir / run_id
    if run_dir.exists():
        if not force:
            raise RunExistsError(
                f"run directory {run_dir} already exists; pass force to overwrite"
            )
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)
    return run_dir


def run_experiment(
    cfg: dict,
    force: bool = False,
    on_step: Callable | None = None,
) -> RunResult:
    """Execute one configured experiment and write its run directory."""
    cfg = validate_config(cfg)
    for label, path in (("dataset", cfg["dataset"]["path"]), ("corpus", cfg["corpus"]["path"])):
        if not Path(path).exists():
            raise ConfigError(f"{label} file not found: {path}")

    run_id = derive_run_id(cfg)
    run_dir = _prepare_run_dir(Path(cfg["out_dir"]), run_id, force)

    started = time.perf_counter()
    ds = load_items(cfg)
    components, pipeline_config = build_components(cfg)
    traces = run_batch(
        list(ds.items),
        pipeline_config,
        components,
        on_step=on_step,
        max_workers=cfg["max_workers"],
    )
    report = evaluate_traces(
        traces,
        ds.by_id(),
        cfg["evaluate"]["metrics"],
        retrieval_k=cfg["evaluate"]["retrieval_k"],
    )
    elapsed = time.perf_counter() - started

    cache = components.cache
    if cache is not None and cfg["retrieval"]["cache_path"]:
        cache.save(cfg["retrieval"]["cache_path"])

    manifest = {
        "run_id": run_id,
        "created_at": datetime.now(timezone.utc).isoformat(),
        "config": cfg,
        "dataset": {
            "path": cfg["dataset"]["path"],
            "split": cfg["dataset"]["split"],
            "n_items": len(ds),
        },
        "corpus": {
            "path": cfg["corpus"]["path"],
            "n_passages": len(components.passages),
        },
        "retriever_fingerprint": getattr(components.retriever, "fingerprint", None),
        "cache": {
            "hits": cache.hits if cache else 0,
            "misses": cache.misses if cache else 0,
        },
        "timings": {"total_s": round(elapsed, 3)},
        "versions": {"ragforge": __version__, "python": sys.version.split()[0]},
    }

    save_traces(traces, run_dir / "traces.jsonl")
    (run_dir / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    (run_dir / "manifest.json").write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return RunResult(run_id=run_id, run_dir=run_dir, manifest=manifest, traces=traces, report=report)


@dataclass
class SweepResult:
    axis: str
    rows: list[dict]  # [{"value", "run_id", "aggregate": {...}}]
    summary_path: Path

    def table(self) -> str:
        return format_sweep_table(self.axis, self.rows)


def run_sweep(
    cfg: dict,
    axis: str | None = None,
    values: list | None = None,
    force: bool = False,
) -> SweepResult:
    """Run one experiment per axis value and collect a comparison table."""
    cfg = validate_config(cfg)
    axis = axis or cfg["sweep"]["axis"]
    values = values if values is not None else cfg["sweep"]["values"]
    if not axis or not values:
        raise ConfigError("sweep needs an axis and a non-empty list of values")

    base_id = derive_run_id(cfg)
    leaf = axis.split(".")[-1]
    rows = []
    for value in values:
        sub_cfg = apply_override(cfg, axis, value)
        sub_cfg = apply_override(
            sub_cfg, "run_id", f"{base_id}_{leaf}={str(value).replace('/', '_')}"
        )
        result = run_experiment(sub_cfg, force=force)
        rows.append(
            {
                "value": value,
                "run_id": result.run_id,
                "aggregate": copy.deepcopy(result.report.aggregate),
            }
        )

    summary = {"axis": axis, "values": values, "rows": rows}
    summary_path = Path(cfg["out_dir"]) / f"{base_id}_sweep.json"
    summary_path.parent.mkdir(parents=True, exist_ok=True)
    summary_path.write_text(
        json.dumps(summary, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return SweepResult(axis=axis, rows=rows, summary_path=summary_path)


def format_sweep_table(axis: str, rows: list[dict]) -> str:
    """Fixed-width comparison table: one row per axis value."""
    metric_names = sorted({name for row in rows for name in row["aggregate"]})
    header = [axis] + metric_names
    body = [
        [str(row["value"])] + [f"{row['aggregate'].get(m, float('nan')):.4f}" for m in metric_names]
        for row in rows
    ]
    widths = [max(len(col), *(len(line[i]) for line in body)) for i, col in enumerate(header)]
    def fmt(line: list[str]) -> str:
        return "  ".join(cell.rjust(width) for cell, width in zip(line, widths))
    divider = "  ".join("-" * width for width in widths)
    return "\n".join([fmt(header), divider] + [fmt(line) for line in body])
