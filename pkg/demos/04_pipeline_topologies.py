"""
Seven pipeline topologies, one trace format
===========================================

Every pipeline — from plain retrieve-then-generate to confidence-gated
iterative lookup — emits the same step-by-step trace. Swap the topology,
keep the tooling. This demo runs each one on a single question against a
tiny in-memory corpus and prints its step timeline.
"""

from ragforge import (
    BM25Retriever,
    Item,
    JudgeExample,
    KnnJudger,
    Passage,
    PassageStore,
    PipelineComponents,
    PipelineConfig,
    TOPOLOGIES,
    build_index,
    make_generator_client,
    run_item,
)
from ragforge.dense import EmbeddingClient, EmbeddingConfig

store = PassageStore()
for pid, text in {
    "ali_1": "Muhammad Ali was 74 years old when he died. The answer is 74.",
    "ali_2": "Ali won the heavyweight title three separate times.",
    "turing_1": "Alan Turing died at the age of 41.",
    "boxing_1": "Heavyweight boxing matches last up to twelve rounds.",
}.items():
    store.add(Passage(id=pid, title=pid.split("_")[0].title(), contents=text))

retriever = BM25Retriever(build_index(store))
generator = make_generator_client("mock://generator", model="mock-qa")
embedder = EmbeddingClient(EmbeddingConfig(endpoint="mock://embedder", model="mock-embed"))

# The conditional topology needs a judger: nearest-neighbor vote over
# labeled example questions deciding retrieve vs answer-directly.
judger = KnnJudger(
    embedder,
    [
        JudgeExample("How old was Muhammad Ali when he died?", "retrieve"),
        JudgeExample("Who won the 1986 world cup?", "retrieve"),
        JudgeExample("What is two plus two?", "no_retrieve"),
        JudgeExample("Say hello.", "no_retrieve"),
    ],
    k=3,
)

components = PipelineComponents(
    generator=generator,
    retriever=retriever,
    passages=store,
    judger=judger,
)

item = Item(
    id="demo",
    question="How old was Muhammad Ali when he died?",
    golden_answers=["74"],
)

# ---------------------------------------------------------------------------
# Run every topology. Loop pipelines tag steps with their iteration; branch
# pipelines add judger/rerank steps; all of them end with a `final` step.
# ---------------------------------------------------------------------------

for topology in TOPOLOGIES:
    config = PipelineConfig(topology=topology, top_k=2, n_iter=2, max_rounds=3)
    trace = run_item(item, config, components)
    steps = " -> ".join(
        f"{s.kind}[{s.iteration}]" if s.iteration else s.kind for s in trace.steps
    )
    print(f"{topology:12s} answer={trace.final_answer!r}")
    print(f"             {steps}")
    if trace.flags:
        print(f"             flags={trace.flags}")
    if trace.error:
        print(f"             error={trace.error}")
    print()

# A trace serializes to one JSON line; runs save one line per item.
trace = run_item(item, PipelineConfig(topology="sequential", top_k=2), components)
print("serialized sequential trace:")
print(trace.to_json()[:160], "...")
