"""ragforge: a modular experimentation engine for retrieval-augmented generation.

The library splits RAG experiments into swappable parts — corpus chunking,
sparse/dense retrieval, context refining, generation, adaptive judging —
wired together by pipeline topologies that all emit the same deterministic
trace format. A config-driven runner, an HTTP service with live step
streaming, and a CLI sit on top of the same building blocks.
"""

__version__ = "0.1.0"

from .bm25 import BM25Params, BM25Retriever, InvertedIndex, analyze, bm25_score, build_index
from .bm25 import search as bm25_search
from .corpus import (
    ChunkPolicy,
    CorpusError,
    Document,
    Passage,
    PassageStore,
    chunk_document,
    chunk_documents,
    corpus_stats,
    load_corpus,
    save_corpus,
    split_sentences,
)
from .dataset import Dataset, DatasetError, Item, load_dataset, save_dataset, select
from .dense import (
    DenseRetriever,
    EmbeddingClient,
    EmbeddingConfig,
    VectorStore,
    build_vector_store,
    dense_search,
    load_vectors,
    save_vectors,
)
from .evaluate import (
    GENERATION_METRICS,
    MetricReport,
    accuracy,
    bleu,
    evaluate_traces,
    exact_match,
    normalize_answer,
    retrieval_metrics,
    rouge_l,
    token_f1,
)
from .generate import (
    GenerationError,
    GenerationOutput,
    GenerationParams,
    HttpGeneratorClient,
    PromptTemplate,
    PromptTooLongError,
    build_prompt,
    build_prompt_from_text,
    make_generator_client,
    score_sequence,
)
from .judge import JudgeDecision, JudgeExample, KnnJudger, load_judge_examples
from .pipelines import (
    PIPELINE_SPECS,
    TOPOLOGIES,
    PipelineComponents,
    PipelineConfig,
    run_batch,
    run_item,
    softmax,
)
from .refine import (
    AbstractiveRefiner,
    ExtractiveRefiner,
    PerplexityRefiner,
    RefineResult,
    abstractive_refine,
    extractive_refine,
    perplexity_refine,
)
from .retrieval import (
    RetrievalCache,
    RetrievalRequest,
    ScoredPassage,
    cached_retrieve,
    import_external_cache,
    rank_scored,
)
from .trace import PipelineTrace, TraceStep, load_traces, save_traces

__all__ = [name for name in dir() if not name.startswith("_")]
