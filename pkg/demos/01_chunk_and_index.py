"""
Chunking documents and searching them with BM25
===============================================

A corpus starts as whole documents. Retrieval wants smaller, overlapping
passages, so the first step is a sliding-window chunker; the second is a
term index over the windows. Everything here is deterministic — run it
twice and every id, span, and score comes out identical.
"""

from ragforge import (
    BM25Params,
    BM25Retriever,
    ChunkPolicy,
    Document,
    PassageStore,
    analyze,
    build_index,
    chunk_document,
)

# ---------------------------------------------------------------------------
# A document is just an id, a title, and text. This one has 12 sentences so
# the window arithmetic below is easy to follow by eye.
# ---------------------------------------------------------------------------

sentences = [
    "Photosynthesis converts light into chemical energy.",
    "Chlorophyll absorbs mostly red and blue light.",
    "The light reactions split water and release oxygen.",
    "ATP and NADPH power the Calvin cycle.",
    "The Calvin cycle fixes carbon dioxide into sugar.",
    "Stomata regulate gas exchange through the leaf surface.",
    "C4 plants concentrate carbon dioxide before fixing it.",
    "CAM plants open their stomata at night instead.",
    "Respiration consumes the sugars photosynthesis builds.",
    "Mitochondria release that stored energy as ATP.",
    "Both processes exchange the same gases in opposite directions.",
    "Together they close the carbon loop inside the plant.",
]
doc = Document(id="photo", title="Photosynthesis", contents=" ".join(sentences))

# A policy of 6 sentences advancing by 3 gives half-overlapping windows:
# sentences 1-6, 4-9, 7-12. The window count obeys ceil((S-size)/stride)+1.
policy = ChunkPolicy(unit="sentences", size=6, stride=3)
passages = chunk_document(doc, policy)

print(f"{len(sentences)} sentences, size={policy.size}, stride={policy.stride}")
for p in passages:
    print(f"  {p.id}  span={p.span}  words={p.word_count}")

# Shrinking the stride to 1 slides the window one sentence at a time;
# the same formula predicts ceil((12-6)/1)+1 = 7 passages.
dense_windows = chunk_document(doc, ChunkPolicy(unit="sentences", size=6, stride=1))
print(f"stride=1 gives {len(dense_windows)} passages")

# ---------------------------------------------------------------------------
# Index the overlapping passages. The analyzer lowercases, strips
# punctuation, and splits on whitespace — no stemming, so what you type is
# what gets matched.
# ---------------------------------------------------------------------------

print()
print("analyze('The CAT, sat.') ->", analyze("The CAT, sat."))

store = PassageStore()
for p in passages:
    store.add(p)
index = build_index(store)
print(f"index: {index.N} passages, {len(index.postings)} distinct terms, avgdl={index.avgdl:.1f}")

# ---------------------------------------------------------------------------
# Search. Scores are classic Okapi sums; ties break by passage id and
# zero-score passages never appear.
# ---------------------------------------------------------------------------

retriever = BM25Retriever(index, BM25Params(k1=0.9, b=0.4))
for query in ("calvin cycle sugar", "stomata at night", "mitochondria"):
    results = retriever.retrieve(query, top_k=3)
    print(f"\nquery: {query!r}")
    for r in results:
        print(f"  rank {r.rank}  {r.passage_id}  score={r.score:.4f}")

# An out-of-vocabulary query scores nothing anywhere and returns empty.
print("\nquery 'quantum chromodynamics' ->", retriever.retrieve("quantum chromodynamics", 3))
