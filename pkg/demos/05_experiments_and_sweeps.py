"""
Config-driven experiments: runs, reports, and sweeps
====================================================

A run is a validated config executed over a dataset: it produces a run
directory with a manifest (what ran), traces (what happened), and a report
(how well it went). Identical inputs give byte-identical traces and
reports. A sweep repeats the run across one config axis and tabulates the
aggregate metrics.
"""

import json
import tempfile
from pathlib import Path

from ragforge import Document, Item, chunk_documents, save_corpus, save_dataset
from ragforge.dataset import Dataset
from ragforge.corpus import ChunkPolicy
from ragforge.runner import run_experiment, run_sweep

workdir = Path(tempfile.mkdtemp(prefix="ragforge_demo_"))

# ---------------------------------------------------------------------------
# Build a toy workspace on disk: chunk three documents into a corpus and
# write a five-question dataset. The mock generator answers from any
# passage containing "The answer is X", so retrieval quality directly
# drives the metrics.
# ---------------------------------------------------------------------------

documents = [
    Document(
        id="sky",
        title="Sky",
        contents=(
            # the first sentence is a decoy: it shares words with the sky
            # question but holds no answer, so top_k=1 retrieval misses
            "Clouds in the sky scatter every wavelength of sunlight equally, "
            "so they appear white. "
            "A clear sky appears blue because short wavelengths scatter the most. "
            "The answer is Rayleigh scattering. Sunsets look red for the same reason."
        ),
    ),
    Document(
        id="everest",
        title="Everest",
        contents=(
            "The tallest mountain above sea level crowns the Himalayas. "
            "The answer is Mount Everest. Its summit reaches 8849 meters."
        ),
    ),
    Document(
        id="mars",
        title="Mars",
        contents=(
            "The red planet owes its color to iron oxide dust. "
            "The answer is Mars. Robotic rovers explore its surface."
        ),
    ),
    Document(
        id="venus",
        title="Venus",
        contents=(
            "The hottest planet swelters under a runaway greenhouse. "
            "The answer is Venus. Its clouds are sulfuric acid."
        ),
    ),
    Document(
        id="jupiter",
        title="Jupiter",
        contents=(
            "The largest planet in the solar system is a gas giant. "
            "The answer is Jupiter. Its great storm has raged for centuries."
        ),
    ),
]
passages = chunk_documents(documents, ChunkPolicy(unit="sentences", size=2, stride=1))
corpus_path = workdir / "corpus.jsonl"
save_corpus(passages, corpus_path)

items = [
    Item(id="q1", question="What causes the sky to appear blue?",
         golden_answers=["Rayleigh scattering"]),
    Item(id="q2", question="What is the tallest mountain?", golden_answers=["Mount Everest"]),
    Item(id="q3", question="Which planet is red?", golden_answers=["Mars"]),
    Item(id="q4", question="What is the hottest planet?", golden_answers=["Venus"]),
    Item(id="q5", question="What is the largest planet?", golden_answers=["Jupiter"]),
]
# q1's best evidence hides behind a decoy passage, so exact match climbs
# from 0.8 to 1.0 once top_k reaches 2 — the shape the sweep below shows.
dataset_path = workdir / "dataset.jsonl"
save_dataset(Dataset(name="toy", split="test", items=items), dataset_path)

print(f"workspace: {workdir}")
print(f"  {len(passages)} passages, {len(items)} questions")

# ---------------------------------------------------------------------------
# One run. The config is an ordinary dict (or YAML file via the CLI);
# unknown keys are rejected with a did-you-mean hint, defaults are filled.
# ---------------------------------------------------------------------------

config = {
    "run_id": "toy_sequential",
    "out_dir": str(workdir / "out"),
    "dataset": {"path": str(dataset_path)},
    "corpus": {"path": str(corpus_path)},
    "pipeline": {"topology": "sequential", "top_k": 3},
    "evaluate": {"metrics": ["em", "f1", "accuracy", "retrieval"]},
}
result = run_experiment(config)
print(f"\nrun directory: {result.run_dir}")
for name in ("manifest.json", "traces.jsonl", "report.json"):
    print(f"  {name}: {(result.run_dir / name).stat().st_size} bytes")
print("aggregate:", json.dumps(result.report.aggregate, indent=2, sort_keys=True))

# ---------------------------------------------------------------------------
# Sweep top_k. Each value becomes its own run directory; the summary table
# lines the aggregates up. Recall@k can only grow as k does.
# ---------------------------------------------------------------------------

sweep = run_sweep(config, axis="pipeline.top_k", values=[1, 2, 3, 5], force=True)
print("\n" + sweep.table())
print(f"\nsummary file: {sweep.summary_path}")
