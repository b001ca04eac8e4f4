"""
The HTTP service: start runs, stream steps live, fetch results
==============================================================

The service exposes the same engine over HTTP: discovery endpoints for
pipelines and metrics, POST /runs to launch work on a background thread,
an SSE event stream that replays and follows every pipeline step (with
Last-Event-ID resume), and trace/report endpoints once a run finishes.

This demo drives the app in-process through the test client; `ragforge
serve --config ...` serves the identical app over a real socket.
"""

import json
import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

from ragforge import Document, Item, chunk_documents, save_corpus, save_dataset
from ragforge.corpus import ChunkPolicy
from ragforge.dataset import Dataset
from ragforge.service import create_app

workdir = Path(tempfile.mkdtemp(prefix="ragforge_service_"))
documents = [
    Document(
        id="facts",
        title="Facts",
        contents=(
            "Water boils at one hundred degrees Celsius at sea level. "
            "The answer is 100 degrees. Pressure lowers the boiling point at altitude. "
            "The answer is Mount Everest. It is the tallest mountain on Earth."
        ),
    )
]
save_corpus(chunk_documents(documents, ChunkPolicy("sentences", 2, 1)), workdir / "corpus.jsonl")
save_dataset(
    Dataset(
        name="toy",
        split="test",
        items=[
            Item(id="q1", question="At what temperature does water boil?",
                 golden_answers=["100 degrees"]),
            Item(id="q2", question="What is the tallest mountain?",
                 golden_answers=["Mount Everest"]),
        ],
    ),
    workdir / "dataset.jsonl",
)

config = {
    "dataset": {"path": str(workdir / "dataset.jsonl")},
    "corpus": {"path": str(workdir / "corpus.jsonl")},
    "pipeline": {"topology": "sequential", "top_k": 2},
}
client = TestClient(create_app(config))

# ---------------------------------------------------------------------------
# Discovery: what pipelines exist and which knobs they take.
# ---------------------------------------------------------------------------

pipelines = client.get("/pipelines").json()["pipelines"]
print("pipelines:", ", ".join(p["name"] for p in pipelines))
print("corpus:", client.get("/corpora").json()["corpora"][0])

# ---------------------------------------------------------------------------
# Launch an ad-hoc question run and wait for it.
# ---------------------------------------------------------------------------

started = client.post(
    "/runs",
    json={"pipeline": "sequential", "question": "At what temperature does water boil?"},
).json()
run_id = started["run_id"]
print(f"\nstarted run {run_id}")

while client.get(f"/runs/{run_id}").json()["status"] == "running":
    time.sleep(0.01)

# ---------------------------------------------------------------------------
# Replay the event stream. Each SSE record has an id (for resume) and one
# JSON event; steps arrive in execution order.
# ---------------------------------------------------------------------------

body = client.get(f"/runs/{run_id}/events").text
print("\nevent stream:")
for block in body.strip().split("\n\n"):
    id_line, data_line = block.splitlines()
    event = json.loads(data_line[len("data: "):])
    detail = event.get("payload", {}).get("answer") or event.get("final_answer") or ""
    print(f"  {id_line[4:]:>2}  {event['kind']:12s} {detail}")

# Dropped connection? Resume from the last id you saw.
resumed = client.get(f"/runs/{run_id}/events", headers={"Last-Event-ID": "3"}).text
print(f"\nresume after id 3 replays {len(resumed.strip().split(chr(10)+chr(10)))} events")

# ---------------------------------------------------------------------------
# Dataset runs can be evaluated once done; traces come back as NDJSON.
# ---------------------------------------------------------------------------

batch = client.post("/runs", json={"dataset": {"sample": 2}}).json()
while client.get(f"/runs/{batch['run_id']}").json()["status"] == "running":
    time.sleep(0.01)

report = client.get(f"/runs/{batch['run_id']}/report", params={"metrics": "em,f1"}).json()
print("\nbatch aggregate:", report["aggregate"])
trace_lines = client.get(f"/runs/{batch['run_id']}/trace").text.strip().splitlines()
print(f"traces: {len(trace_lines)} NDJSON lines")
