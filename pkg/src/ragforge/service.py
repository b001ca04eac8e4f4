"""HTTP service: start runs, stream their steps live, fetch traces/reports.

The service wraps one configured workspace (corpus + components). Runs
execute on background threads and publish every pipeline step to an
append-only per-run event log; clients follow along over Server-Sent
Events, resuming after a dropped connection via ``Last-Event-ID``. Trace
and report endpoints return 409 while a run is still executing, so clients
can't observe half-written results.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from typing import Iterator

from fastapi import FastAPI, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import PlainTextResponse, StreamingResponse

from .bm25 import BM25Params, BM25Retriever, build_index
from .config import ConfigError, validate_config
from .corpus import corpus_stats, load_corpus
from .dataset import Item
from .evaluate import KNOWN_METRICS, evaluate_traces
from .generate import GenerationParams
from .pipelines import (
    PIPELINE_SPECS,
    TOPOLOGIES,
    PipelineConfig,
    run_batch,
)
from .runner import build_components, load_items
from .trace import PipelineTrace


@dataclass
class RunState:
    run_id: str
    pipeline: str
    n_items: int
    status: str = "running"  # running | done | error
    events: list[dict] = field(default_factory=list)
    traces: list[PipelineTrace] = field(default_factory=list)
    items_by_id: dict = field(default_factory=dict)
    error: str | None = None
    condition: threading.Condition = field(default_factory=threading.Condition)

    def publish(self, kind: str, data: dict) -> None:
        with self.condition:
            self.events.append({"kind": kind, **data})
            self.condition.notify_all()

    def finish(self, status: str, error: str | None = None) -> None:
        with self.condition:
            self.status = status
            self.error = error
            self.condition.notify_all()


def _sse_format(seq: int, event: dict) -> str:
    return f"id: {seq}\ndata: {json.dumps(event, sort_keys=True)}\n\n"


def create_app(cfg: dict, components_override=None) -> FastAPI:
    """Build the service around one validated workspace configuration.

    ``components_override`` swaps in a prebuilt component bundle (tests use
    this to control timing and backends).
    """
    cfg = validate_config(cfg)
    store = load_corpus(cfg["corpus"]["path"])
    generation_params = GenerationParams(
        max_input_tokens=cfg["generator"]["max_input_tokens"],
        max_new_tokens=cfg["generator"]["max_new_tokens"],
        temperature=float(cfg["generator"]["temperature"]),
    )
    state_lock = threading.Lock()
    runs: dict[str, RunState] = {}
    index_jobs: dict[str, dict] = {}
    # component bundle shared across runs; rebuilt by POST /indexes
    shared = {"components": components_override}

    def components():
        with state_lock:
            if shared["components"] is None:
                comps, _ = build_components(cfg, store=store)
                shared["components"] = comps
            return shared["components"]

    app = FastAPI(title="ragforge service", version="0.1.0")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.get("/schema")
    def schema() -> dict:
        return {
            "pipelines": PIPELINE_SPECS,
            "metrics": KNOWN_METRICS,
            "generation_defaults": cfg["generator"],
        }

    @app.get("/pipelines")
    def pipelines() -> dict:
        return {
            "pipelines": [
                {"name": name, **spec} for name, spec in PIPELINE_SPECS.items()
            ]
        }

    @app.get("/corpora")
    def corpora() -> dict:
        stats = corpus_stats(store)
        return {
            "corpora": [
                {
                    "path": cfg["corpus"]["path"],
                    "passages": stats.passage_count,
                    "avg_word_length": stats.avg_word_length,
                }
            ]
        }

    @app.post("/indexes", status_code=202)
    def rebuild_index(body: dict) -> dict:
        method = body.get("method", "bm25")
        if method != "bm25":
            raise HTTPException(422, f"only bm25 indexes can be rebuilt, got {method!r}")
        with state_lock:
            active = [j for j in index_jobs.values() if j["status"] == "building"]
            if active:
                raise HTTPException(409, "an index rebuild is already in progress")
            job_id = uuid.uuid4().hex[:12]
            index_jobs[job_id] = {"id": job_id, "method": method, "status": "building"}

        def build() -> None:
            try:
                bm25_cfg = cfg["retrieval"]["bm25"]
                index = build_index(store)
                retriever = BM25Retriever(
                    index, BM25Params(k1=float(bm25_cfg["k1"]), b=float(bm25_cfg["b"]))
                )
                with state_lock:
                    if shared["components"] is not None:
                        shared["components"].retriever = retriever
                    index_jobs[job_id]["status"] = "ready"
                    index_jobs[job_id]["passages"] = index.N
            except Exception as exc:  # noqa: BLE001 - job status carries the failure
                with state_lock:
                    index_jobs[job_id]["status"] = "error"
                    index_jobs[job_id]["error"] = str(exc)

        threading.Thread(target=build, daemon=True).start()
        return {"id": job_id, "status": "building"}

    @app.get("/indexes/{job_id}")
    def index_status(job_id: str) -> dict:
        with state_lock:
            job = index_jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown index job {job_id!r}")
        return job

    @app.get("/runs")
    def list_runs() -> dict:
        with state_lock:
            return {
                "runs": [
                    {
                        "run_id": r.run_id,
                        "pipeline": r.pipeline,
                        "status": r.status,
                        "n_items": r.n_items,
                        "events": len(r.events),
                    }
                    for r in runs.values()
                ]
            }

    @app.post("/runs", status_code=201)
    def start_run(body: dict) -> dict:
        pipeline = body.get("pipeline", cfg["pipeline"]["topology"])
        if pipeline not in TOPOLOGIES:
            raise HTTPException(422, f"unknown pipeline {pipeline!r}; expected one of {TOPOLOGIES}")
        question = body.get("question")
        dataset_req = body.get("dataset")
        if (question is None) == (dataset_req is None):
            raise HTTPException(400, "provide exactly one of 'question' or 'dataset'")

        params = body.get("params") or {}
        allowed = set(PIPELINE_SPECS[pipeline]["params"])
        unknown = set(params) - allowed
        if unknown:
            raise HTTPException(
                422, f"unknown params for {pipeline}: {sorted(unknown)}; allowed: {sorted(allowed)}"
            )
        pipe_defaults = cfg["pipeline"]
        try:
            pipeline_config = PipelineConfig(
                topology=pipeline,
                top_k=params.get("top_k", pipe_defaults["top_k"]),
                flare_theta=params.get("flare_theta", pipe_defaults["flare_theta"]),
                n_iter=params.get("n_iter", pipe_defaults["n_iter"]),
                max_rounds=params.get("max_rounds", pipe_defaults["max_rounds"]),
                rerank_depth=cfg["retrieval"]["rerank"]["depth"],
                params=generation_params,
            )
        except ValueError as exc:
            raise HTTPException(422, str(exc)) from exc

        if question is not None:
            if not isinstance(question, str) or not question.strip():
                raise HTTPException(422, "'question' must be a non-empty string")
            items = [Item(id="adhoc_0", question=question, golden_answers=[])]
        else:
            if not isinstance(dataset_req, dict):
                raise HTTPException(422, "'dataset' must be an object, e.g. {\"sample\": 5}")
            try:
                ds = load_items(cfg)
            except (ConfigError, FileNotFoundError) as exc:
                raise HTTPException(400, str(exc)) from exc
            items = list(ds.items)
            sample = dataset_req.get("sample")
            if sample is not None:
                if not isinstance(sample, int) or sample < 1:
                    raise HTTPException(422, "'dataset.sample' must be a positive integer")
                items = items[:sample]

        run_id = uuid.uuid4().hex[:12]
        run = RunState(run_id=run_id, pipeline=pipeline, n_items=len(items))
        run.items_by_id = {item.id: item for item in items}
        with state_lock:
            runs[run_id] = run

        comps = components()

        def execute() -> None:
            run.publish("run_started", {"run_id": run_id, "n_items": len(items)})
            try:
                def on_step(item_id: str, step) -> None:
                    run.publish(
                        step.kind,
                        {
                            "item_id": item_id,
                            "iteration": step.iteration,
                            "payload": step.payload,
                        },
                    )

                traces = run_batch(items, pipeline_config, comps, on_step=on_step)
                run.traces = traces
                for trace in traces:
                    run.publish(
                        "item_done",
                        {
                            "item_id": trace.item_id,
                            "final_answer": trace.final_answer,
                            "error": trace.error,
                        },
                    )
                run.publish(
                    "run_done",
                    {
                        "run_id": run_id,
                        "status": "done",
                        "errors": sum(1 for t in traces if t.error),
                    },
                )
                run.finish("done")
            except Exception as exc:  # noqa: BLE001 - surfaced via the event stream
                run.publish("run_error", {"run_id": run_id, "error": str(exc)})
                run.finish("error", str(exc))

        threading.Thread(target=execute, daemon=True).start()
        return {"run_id": run_id, "status": "running", "n_items": len(items)}

    def _get_run(run_id: str) -> RunState:
        with state_lock:
            run = runs.get(run_id)
        if run is None:
            raise HTTPException(404, f"unknown run {run_id!r}")
        return run

    @app.get("/runs/{run_id}")
    def run_info(run_id: str) -> dict:
        run = _get_run(run_id)
        return {
            "run_id": run.run_id,
            "pipeline": run.pipeline,
            "status": run.status,
            "n_items": run.n_items,
            "error": run.error,
        }

    @app.get("/runs/{run_id}/events")
    def run_events(run_id: str, request: Request, last_event_id: int | None = None):
        run = _get_run(run_id)
        header = request.headers.get("last-event-id")
        start_after = last_event_id if last_event_id is not None else 0
        if header is not None:
            try:
                start_after = int(header)
            except ValueError as exc:
                raise HTTPException(400, "Last-Event-ID must be an integer") from exc

        def stream() -> Iterator[str]:
            cursor = start_after  # events are 1-indexed in SSE ids
            while True:
                with run.condition:
                    while len(run.events) <= cursor and run.status == "running":
                        run.condition.wait(timeout=0.25)
                    batch = list(run.events[cursor:])
                    terminal = run.status != "running"
                for offset, event in enumerate(batch):
                    yield _sse_format(cursor + offset + 1, event)
                cursor += len(batch)
                if terminal and not batch:
                    return
                if terminal:
                    with run.condition:
                        if cursor >= len(run.events):
                            return

        return StreamingResponse(stream(), media_type="text/event-stream")

    @app.get("/runs/{run_id}/trace")
    def run_trace(run_id: str):
        run = _get_run(run_id)
        if run.status == "running":
            raise HTTPException(409, f"run {run_id} is still running")
        lines = "".join(trace.to_json() + "\n" for trace in run.traces)
        return PlainTextResponse(lines, media_type="application/x-ndjson")

    @app.get("/runs/{run_id}/report")
    def run_report(run_id: str, metrics: str | None = None) -> dict:
        run = _get_run(run_id)
        if run.status == "running":
            raise HTTPException(409, f"run {run_id} is still running")
        return _evaluate_run(run, metrics.split(",") if metrics else None)

    @app.post("/evaluate")
    def evaluate(body: dict) -> dict:
        run_id = body.get("run_id")
        if not run_id:
            raise HTTPException(400, "body must include 'run_id'")
        run = _get_run(run_id)
        if run.status == "running":
            raise HTTPException(409, f"run {run_id} is still running")
        return _evaluate_run(run, body.get("metrics"))

    def _evaluate_run(run: RunState, metrics: list[str] | None) -> dict:
        scorable = {
            item_id: item
            for item_id, item in run.items_by_id.items()
            if item.golden_answers
        }
        if not scorable:
            raise HTTPException(
                404, "run has no golden answers to evaluate (ad-hoc question run)"
            )
        traces = [t for t in run.traces if t.item_id in scorable]
        try:
            report = evaluate_traces(
                traces,
                scorable,
                metrics or cfg["evaluate"]["metrics"],
                retrieval_k=cfg["evaluate"]["retrieval_k"],
            )
        except ValueError as exc:
            raise HTTPException(400, str(exc)) from exc
        return report.to_dict()

    return app
