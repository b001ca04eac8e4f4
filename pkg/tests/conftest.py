"""Shared fixtures: toy corpus/dataset paths and prebuilt components."""

from pathlib import Path

import pytest

from ragforge.bm25 import BM25Retriever, build_index
from ragforge.corpus import load_corpus
from ragforge.dataset import load_dataset
from ragforge.dense import EmbeddingClient, EmbeddingConfig
from ragforge.generate import make_generator_client

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA_DIR


@pytest.fixture(scope="session")
def corpus_path() -> Path:
    return DATA_DIR / "corpus.jsonl"


@pytest.fixture(scope="session")
def dataset_path() -> Path:
    return DATA_DIR / "dataset.jsonl"


@pytest.fixture(scope="session")
def toy_store(corpus_path):
    return load_corpus(corpus_path)


@pytest.fixture(scope="session")
def toy_dataset(dataset_path):
    return load_dataset(dataset_path, "test")


@pytest.fixture(scope="session")
def toy_retriever(toy_store):
    return BM25Retriever(build_index(toy_store))


@pytest.fixture()
def mock_generator():
    return make_generator_client("mock://generator", "mock-qa")


@pytest.fixture()
def mock_embedder():
    return EmbeddingClient(EmbeddingConfig(endpoint="mock://embedder", model="mock-embed"))


def base_config(tmp_path: Path, **overrides) -> dict:
    """Minimal runnable config against the toy fixtures and mocks."""
    cfg = {
        "run_id": "test_run",
        "out_dir": str(tmp_path / "out"),
        "dataset": {"path": str(DATA_DIR / "dataset.jsonl"), "split": "test"},
        "corpus": {"path": str(DATA_DIR / "corpus.jsonl")},
        "pipeline": {"topology": "sequential", "top_k": 5},
        "evaluate": {"metrics": ["em", "f1", "accuracy", "retrieval"]},
    }
    cfg.update(overrides)
    return cfg
