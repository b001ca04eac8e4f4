"""HTTP service: run lifecycle, live event streams, and evaluation endpoints."""

from __future__ import annotations

import json
import threading
import time

import pytest
from fastapi.testclient import TestClient

from ragforge.corpus import PassageStore
from ragforge.generate import GenerationOutput
from ragforge.pipelines import PIPELINE_SPECS, PipelineComponents
from ragforge.service import create_app

from conftest import base_config


@pytest.fixture()
def client(tmp_path):
    with TestClient(create_app(base_config(tmp_path))) as c:
        yield c


def wait_done(client, run_id, timeout=15.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        info = client.get(f"/runs/{run_id}").json()
        if info["status"] != "running":
            return info
        time.sleep(0.01)
    raise AssertionError(f"run {run_id} still running after {timeout}s")


def parse_sse(text):
    """Return [(event_id, event_dict)] from a raw SSE body."""
    events = []
    for block in text.strip().split("\n\n"):
        id_line, data_line = block.splitlines()
        assert id_line.startswith("id: ")
        assert data_line.startswith("data: ")
        events.append((int(id_line[4:]), json.loads(data_line[6:])))
    return events


class TestDiscoveryEndpoints:
    def test_schema(self, client):
        body = client.get("/schema").json()
        assert body["pipelines"] == PIPELINE_SPECS
        assert "em" in body["metrics"]
        assert body["generation_defaults"]["max_new_tokens"] == 32

    def test_pipelines_listing(self, client):
        body = client.get("/pipelines").json()
        names = [p["name"] for p in body["pipelines"]]
        assert set(names) == set(PIPELINE_SPECS)
        for p in body["pipelines"]:
            assert p["description"]
            assert "params" in p

    def test_corpora(self, client):
        body = client.get("/corpora").json()
        assert len(body["corpora"]) == 1
        corpus = body["corpora"][0]
        assert corpus["passages"] == 100
        assert corpus["avg_word_length"] > 0
        assert corpus["path"].endswith("corpus.jsonl")


class TestStartRunValidation:
    def test_unknown_pipeline(self, client):
        r = client.post("/runs", json={"pipeline": "bogus", "question": "hi"})
        assert r.status_code == 422
        assert "unknown pipeline" in r.json()["detail"]

    def test_question_and_dataset_are_exclusive(self, client):
        r = client.post(
            "/runs", json={"question": "hi", "dataset": {"sample": 1}}
        )
        assert r.status_code == 400
        r = client.post("/runs", json={})
        assert r.status_code == 400
        assert "exactly one" in r.json()["detail"]

    def test_unknown_params_rejected_with_allowed_list(self, client):
        r = client.post(
            "/runs",
            json={"pipeline": "sequential", "question": "hi", "params": {"theta": 1}},
        )
        assert r.status_code == 422
        assert "theta" in r.json()["detail"]
        assert "top_k" in r.json()["detail"]

    def test_invalid_param_value(self, client):
        r = client.post(
            "/runs",
            json={"pipeline": "sequential", "question": "hi", "params": {"top_k": 0}},
        )
        assert r.status_code == 422

    def test_blank_question(self, client):
        r = client.post("/runs", json={"question": "   "})
        assert r.status_code == 422

    def test_dataset_must_be_object(self, client):
        r = client.post("/runs", json={"dataset": "all"})
        assert r.status_code == 422

    def test_dataset_sample_must_be_positive(self, client):
        r = client.post("/runs", json={"dataset": {"sample": 0}})
        assert r.status_code == 422

    def test_unknown_run_404(self, client):
        assert client.get("/runs/deadbeef").status_code == 404
        assert client.get("/runs/deadbeef/trace").status_code == 404
        assert client.get("/runs/deadbeef/events").status_code == 404


class TestAdhocRun:
    def start(self, client, **body):
        payload = {"pipeline": "sequential", "question": "What causes the sky to appear blue?"}
        payload.update(body)
        r = client.post("/runs", json=payload)
        assert r.status_code == 201, r.text
        return r.json()

    def test_start_response_shape(self, client):
        started = self.start(client)
        assert started["status"] == "running"
        assert started["n_items"] == 1
        assert len(started["run_id"]) == 12

    def test_run_completes_and_lists(self, client):
        started = self.start(client)
        info = wait_done(client, started["run_id"])
        assert info["status"] == "done"
        assert info["error"] is None
        listing = client.get("/runs").json()["runs"]
        match = [r for r in listing if r["run_id"] == started["run_id"]]
        assert match and match[0]["status"] == "done"
        assert match[0]["pipeline"] == "sequential"
        assert match[0]["events"] > 0

    def test_event_stream_order_and_ids(self, client):
        started = self.start(client)
        wait_done(client, started["run_id"])
        events = parse_sse(client.get(f"/runs/{started['run_id']}/events").text)
        ids = [eid for eid, _ in events]
        assert ids == list(range(1, len(events) + 1))
        kinds = [e["kind"] for _, e in events]
        assert kinds[0] == "run_started"
        assert kinds[-1] == "run_done"
        assert "retrieve" in kinds
        assert "prompt" in kinds
        assert "generate" in kinds
        assert "final" in kinds
        assert "item_done" in kinds
        final = next(e for _, e in events if e["kind"] == "final")
        assert final["item_id"] == "adhoc_0"
        assert "answer" in final["payload"]

    def test_resume_with_last_event_id_header(self, client):
        started = self.start(client)
        wait_done(client, started["run_id"])
        url = f"/runs/{started['run_id']}/events"
        full = parse_sse(client.get(url).text)
        cut = len(full) // 2
        resumed = parse_sse(client.get(url, headers={"Last-Event-ID": str(cut)}).text)
        assert resumed == full[cut:]
        assert resumed[0][0] == cut + 1

    def test_resume_with_query_param(self, client):
        started = self.start(client)
        wait_done(client, started["run_id"])
        url = f"/runs/{started['run_id']}/events"
        full = parse_sse(client.get(url).text)
        resumed = parse_sse(client.get(url, params={"last_event_id": len(full) - 2}).text)
        assert resumed == full[-2:]

    def test_resume_past_end_yields_nothing(self, client):
        started = self.start(client)
        wait_done(client, started["run_id"])
        url = f"/runs/{started['run_id']}/events"
        total = len(parse_sse(client.get(url).text))
        assert client.get(url, headers={"Last-Event-ID": str(total)}).text == ""

    def test_bad_last_event_id(self, client):
        started = self.start(client)
        wait_done(client, started["run_id"])
        r = client.get(
            f"/runs/{started['run_id']}/events", headers={"Last-Event-ID": "abc"}
        )
        assert r.status_code == 400

    def test_trace_is_ndjson(self, client):
        started = self.start(client)
        wait_done(client, started["run_id"])
        r = client.get(f"/runs/{started['run_id']}/trace")
        assert r.status_code == 200
        assert r.headers["content-type"].startswith("application/x-ndjson")
        lines = r.text.strip().splitlines()
        assert len(lines) == 1
        trace = json.loads(lines[0])
        assert trace["item_id"] == "adhoc_0"
        assert trace["final_answer"]

    def test_adhoc_run_cannot_be_evaluated(self, client):
        started = self.start(client)
        wait_done(client, started["run_id"])
        r = client.post("/evaluate", json={"run_id": started["run_id"]})
        assert r.status_code == 404
        assert "golden" in r.json()["detail"]

    def test_params_override_reaches_pipeline(self, client):
        started = self.start(client, pipeline="iter_retgen", params={"n_iter": 2})
        wait_done(client, started["run_id"])
        events = parse_sse(client.get(f"/runs/{started['run_id']}/events").text)
        iteration_steps = [e for _, e in events if e["kind"] == "iteration"]
        assert [e["payload"]["index"] for e in iteration_steps] == [1, 2]


class TestDatasetRun:
    def test_sampled_dataset_run_and_report(self, client):
        r = client.post("/runs", json={"dataset": {"sample": 2}})
        assert r.status_code == 201
        run_id = r.json()["run_id"]
        assert r.json()["n_items"] == 2
        wait_done(client, run_id)

        report = client.get(f"/runs/{run_id}/report").json()
        assert set(report["aggregate"]) >= {"em", "f1", "accuracy"}
        assert len(report["per_item"]) == 2

        narrowed = client.get(f"/runs/{run_id}/report", params={"metrics": "em"}).json()
        assert set(narrowed["aggregate"]) == {"em"}

    def test_post_evaluate_matches_get_report(self, client):
        run_id = client.post("/runs", json={"dataset": {"sample": 2}}).json()["run_id"]
        wait_done(client, run_id)
        via_get = client.get(f"/runs/{run_id}/report", params={"metrics": "em,f1"}).json()
        via_post = client.post(
            "/evaluate", json={"run_id": run_id, "metrics": ["em", "f1"]}
        ).json()
        assert via_post == via_get

    def test_unknown_metric_is_400(self, client):
        run_id = client.post("/runs", json={"dataset": {"sample": 1}}).json()["run_id"]
        wait_done(client, run_id)
        r = client.get(f"/runs/{run_id}/report", params={"metrics": "wer"})
        assert r.status_code == 400

    def test_evaluate_requires_run_id(self, client):
        assert client.post("/evaluate", json={}).status_code == 400
        assert client.post("/evaluate", json={"run_id": "nope"}).status_code == 404


class GatedGenerator:
    """Blocks inside generate() until released, to observe running state."""

    supports_logprobs = False
    supports_scoring = False

    def __init__(self):
        self.release = threading.Event()
        self.entered = threading.Event()

    def generate(self, messages, params):
        self.entered.set()
        assert self.release.wait(timeout=15), "test never released the generator"
        return GenerationOutput(text="gated answer", token_count=2)


class TestRunningState:
    def test_trace_and_report_conflict_while_running(self, tmp_path):
        gated = GatedGenerator()
        override = PipelineComponents(
            generator=gated, retriever=None, passages=PassageStore()
        )
        app = create_app(base_config(tmp_path), components_override=override)
        with TestClient(app) as client:
            run_id = client.post("/runs", json={"question": "slow one"}).json()["run_id"]
            assert gated.entered.wait(timeout=15)
            assert client.get(f"/runs/{run_id}").json()["status"] == "running"
            assert client.get(f"/runs/{run_id}/trace").status_code == 409
            assert client.get(f"/runs/{run_id}/report").status_code == 409
            assert client.post("/evaluate", json={"run_id": run_id}).status_code == 409
            gated.release.set()
            wait_done(client, run_id)
            done = client.get(f"/runs/{run_id}/trace")
            assert done.status_code == 200
            assert json.loads(done.text)["final_answer"] == "gated answer"

    def test_component_failure_surfaces_as_run_error(self, tmp_path):
        class BrokenGenerator:
            supports_logprobs = False
            supports_scoring = False

            def generate(self, messages, params):
                raise RuntimeError("backend unavailable")

        override = PipelineComponents(
            generator=BrokenGenerator(), retriever=None, passages=PassageStore()
        )
        app = create_app(base_config(tmp_path), components_override=override)
        with TestClient(app) as client:
            run_id = client.post("/runs", json={"question": "hi"}).json()["run_id"]
            info = wait_done(client, run_id)
            # pipeline failures are fail-soft: run finishes with an errored trace
            assert info["status"] == "done"
            trace = json.loads(client.get(f"/runs/{run_id}/trace").text)
            assert "backend unavailable" in trace["error"]
            events = parse_sse(client.get(f"/runs/{run_id}/events").text)
            run_done = [e for _, e in events if e["kind"] == "run_done"]
            assert run_done and run_done[0]["errors"] == 1


class TestIndexRebuild:
    def wait_job(self, client, job_id, timeout=15.0):
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            job = client.get(f"/indexes/{job_id}").json()
            if job["status"] != "building":
                return job
            time.sleep(0.01)
        raise AssertionError("index build never finished")

    def test_rebuild_lifecycle(self, client):
        r = client.post("/indexes", json={"method": "bm25"})
        assert r.status_code == 202
        job = r.json()
        assert job["status"] == "building"
        done = self.wait_job(client, job["id"])
        assert done["status"] == "ready"
        assert done["passages"] == 100

    def test_only_bm25_supported(self, client):
        r = client.post("/indexes", json={"method": "faiss"})
        assert r.status_code == 422

    def test_unknown_job_404(self, client):
        assert client.get("/indexes/nope").status_code == 404

    def test_concurrent_rebuild_conflicts(self, tmp_path, monkeypatch):
        release = threading.Event()
        import ragforge.service as service_module
        real_build = service_module.build_index

        def slow_build(store):
            assert release.wait(timeout=15)
            return real_build(store)

        monkeypatch.setattr(service_module, "build_index", slow_build)
        app = create_app(base_config(tmp_path))
        with TestClient(app) as client:
            first = client.post("/indexes", json={})
            assert first.status_code == 202
            second = client.post("/indexes", json={})
            assert second.status_code == 409
            release.set()
            job = self.wait_job(client, first.json()["id"])
            assert job["status"] == "ready"
