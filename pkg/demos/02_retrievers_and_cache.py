"""
Dense retrieval, reranking, and the retrieval cache
===================================================

Sparse and dense retrievers share one output shape (ScoredPassage), so
everything downstream — caches, rerankers, pipelines — treats them
interchangeably. This demo uses the in-repo deterministic mock embedding
service, so it runs fully offline.
"""

from ragforge import (
    EmbeddingClient,
    EmbeddingConfig,
    DenseRetriever,
    Passage,
    PassageStore,
    RetrievalCache,
    RetrievalRequest,
    build_vector_store,
    cached_retrieve,
)
from ragforge.retrieval import BiEncoderReranker, RerankingRetriever

store = PassageStore()
for pid, text in {
    "mars_1": "Mars is called the red planet because of iron oxide dust.",
    "mars_2": "Olympus Mons on Mars is the tallest volcano in the solar system.",
    "venus_1": "Venus has a runaway greenhouse atmosphere of carbon dioxide.",
    "moon_1": "The Moon is tidally locked and always shows the same face.",
    "sun_1": "The Sun fuses hydrogen into helium in its core.",
}.items():
    store.add(Passage(id=pid, title=pid.split("_")[0].title(), contents=text))

# ---------------------------------------------------------------------------
# Embed the corpus and search it. mock:// endpoints route to an in-process
# stand-in whose vectors are a pure function of the text, so scores are
# stable across machines and runs.
# ---------------------------------------------------------------------------

embedder = EmbeddingClient(
    EmbeddingConfig(endpoint="mock://embedder", model="mock-embed", batch_size=1024)
)
vector_store = build_vector_store(store, embedder, metric="cosine")
retriever = DenseRetriever(vector_store, embedder)
print("fingerprint:", retriever.fingerprint)

query = "why does mars look red"
for r in retriever.retrieve(query, top_k=3):
    print(f"  rank {r.rank}  {r.passage_id:8s}  cosine={r.score:.4f}")

# ---------------------------------------------------------------------------
# A reranker rescores the retriever's candidates. The bi-encoder variant
# re-embeds query and passages and reorders the fetched pool; `resolve`
# maps ids back to passage contents.
# ---------------------------------------------------------------------------

reranked = RerankingRetriever(retriever, BiEncoderReranker(embedder), resolve=store.get)
print("\nafter reranking the top-5 pool:")
for r in reranked.retrieve(query, top_k=5)[:3]:
    print(f"  rank {r.rank}  {r.passage_id:8s}  score={r.score:.4f}")

# ---------------------------------------------------------------------------
# The cache sits in front of any retriever. First lookup misses and stores;
# repeats (and smaller-k prefixes, and whitespace variants) hit without
# touching the backend. Results are identical either way.
# ---------------------------------------------------------------------------

cache = RetrievalCache()
direct = retriever.retrieve(query, 3)

first, was_hit = cached_retrieve(cache, retriever, RetrievalRequest(query, 3))
print(f"\nfirst call: hit={was_hit}")
again, was_hit = cached_retrieve(cache, retriever, RetrievalRequest(query, 3))
print(f"second call: hit={was_hit}")
prefix, was_hit = cached_retrieve(cache, retriever, RetrievalRequest("  why  does mars look red ", 2))
print(f"normalized-query prefix (k=2): hit={was_hit}, ids={[r.passage_id for r in prefix]}")

assert first == direct == again
print(f"cache stats: hits={cache.hits}, misses={cache.misses}")
