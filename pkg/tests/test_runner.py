"""Experiment runner and command-line entry points: run directories,
manifests, sweeps, and artifact determinism."""

from __future__ import annotations

import json

import pytest
import yaml

from ragforge.bm25 import BM25Retriever, InvertedIndex
from ragforge.cli import main
from ragforge.config import ConfigError, validate_config
from ragforge.corpus import load_corpus
from ragforge.dense import DenseRetriever
from ragforge.judge import KnnJudger
from ragforge.refine import AbstractiveRefiner, ExtractiveRefiner, PerplexityRefiner
from ragforge.retrieval import EXTERNAL_FINGERPRINT, BiEncoderReranker
from ragforge.runner import (
    RunExistsError,
    build_components,
    derive_run_id,
    format_sweep_table,
    load_items,
    run_experiment,
    run_sweep,
)
from ragforge.trace import load_traces

from conftest import base_config


class TestLoadItems:
    def test_full_split(self, tmp_path):
        ds = load_items(validate_config(base_config(tmp_path)))
        assert len(ds) == 10
        assert ds.items[0].id == "q01"

    def test_sequential_sample_takes_prefix(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["dataset"]["sample"] = 3
        ds = load_items(validate_config(cfg))
        assert [i.id for i in ds.items] == ["q01", "q02", "q03"]

    def test_random_sample_is_seeded(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["dataset"].update(sample=4, sample_mode="random")
        cfg["seed"] = 11
        first = [i.id for i in load_items(validate_config(cfg)).items]
        second = [i.id for i in load_items(validate_config(cfg)).items]
        assert first == second
        assert len(first) == 4
        cfg["seed"] = 12
        third = [i.id for i in load_items(validate_config(cfg)).items]
        assert sorted(third) != sorted(first) or third != first

    def test_sample_larger_than_dataset_is_identity(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["dataset"]["sample"] = 999
        assert len(load_items(validate_config(cfg))) == 10


class TestBuildComponents:
    def test_default_bm25_stack(self, tmp_path):
        components, config = build_components(base_config(tmp_path))
        assert isinstance(components.retriever, BM25Retriever)
        assert components.retriever.fingerprint.startswith("bm25:k1=0.9:b=0.4:")
        assert len(components.passages) == 100
        assert components.reranker is None
        assert components.refiner is None
        assert components.judger is None
        assert components.cache is None
        assert config.topology == "sequential"
        assert config.params.max_new_tokens == 32

    def test_no_retrieval_method(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["retrieval"] = {"method": "none"}
        components, _ = build_components(cfg)
        assert components.retriever is None

    def test_dense_method_builds_store_via_embedder(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["retrieval"] = {"method": "dense"}
        components, _ = build_components(cfg)
        assert isinstance(components.retriever, DenseRetriever)
        assert components.retriever.fingerprint.startswith("dense:model=mock-embed:")

    def test_prebuilt_bm25_index_loaded_from_disk(self, tmp_path, toy_store):
        from ragforge.bm25 import build_index

        index_path = tmp_path / "toy.index"
        build_index(toy_store).to_jsonl(index_path)
        cfg = base_config(tmp_path)
        cfg["retrieval"] = {"method": "bm25", "bm25": {"index_path": str(index_path)}}
        components, _ = build_components(cfg)
        assert components.retriever.index.N == 100

    def test_refiner_selection(self, tmp_path):
        for method, cls in (
            ("extractive", ExtractiveRefiner),
            ("perplexity", PerplexityRefiner),
            ("abstractive", AbstractiveRefiner),
        ):
            cfg = base_config(tmp_path)
            cfg["refine"] = {"method": method}
            components, _ = build_components(cfg)
            assert isinstance(components.refiner, cls), method

    def test_bi_encoder_reranker_and_depth(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["retrieval"] = {"rerank": {"method": "bi_encoder", "depth": 8}}
        components, config = build_components(cfg)
        assert isinstance(components.reranker, BiEncoderReranker)
        assert config.rerank_depth == 8

    def test_judger_built_from_training_file(self, tmp_path, data_dir):
        cfg = base_config(tmp_path)
        cfg["pipeline"]["topology"] = "conditional"
        cfg["judge"] = {"training_path": str(data_dir / "judge_train.jsonl"), "k": 3}
        components, _ = build_components(cfg)
        assert isinstance(components.judger, KnnJudger)
        assert components.judger.k == 3

    def test_cache_created_when_path_configured(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["retrieval"] = {"cache_path": str(tmp_path / "cache.jsonl")}
        components, _ = build_components(cfg)
        assert components.cache is not None
        assert components.cache.hits == 0

    def test_external_cache_import(self, tmp_path):
        external = {
            "What causes the sky to appear blue?": [
                {"id": "ext_1", "title": "Sky", "contents": "Rayleigh scattering.", "score": 9.5},
                {"id": "p001", "contents": "already in corpus", "score": 1.0},
            ]
        }
        ext_path = tmp_path / "external.json"
        ext_path.write_text(json.dumps(external), encoding="utf-8")
        cfg = base_config(tmp_path)
        cfg["retrieval"] = {"method": "external", "external_cache": str(ext_path)}
        components, _ = build_components(cfg)
        assert components.retriever.fingerprint == EXTERNAL_FINGERPRINT
        assert "ext_1" in components.passages  # imported passage joined the store
        # uncached queries cannot be served
        with pytest.raises(RuntimeError, match="external cache"):
            components.retriever.retrieve("unseen query", 5)


class TestDeriveRunId:
    def test_explicit_id_wins(self, tmp_path):
        cfg = validate_config(base_config(tmp_path))
        assert derive_run_id(cfg) == "test_run"

    def test_default_combines_dataset_and_topology(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["run_id"] = None
        cfg["pipeline"]["topology"] = "flare"
        assert derive_run_id(validate_config(cfg)) == "dataset_flare"


class TestRunExperiment:
    def test_run_directory_layout(self, tmp_path):
        result = run_experiment(base_config(tmp_path))
        assert result.run_dir == tmp_path / "out" / "test_run"
        for name in ("manifest.json", "traces.jsonl", "report.json"):
            assert (result.run_dir / name).exists(), name

    def test_manifest_contents(self, tmp_path):
        result = run_experiment(base_config(tmp_path))
        manifest = json.loads((result.run_dir / "manifest.json").read_text())
        assert manifest["run_id"] == "test_run"
        assert manifest["dataset"]["n_items"] == 10
        assert manifest["corpus"]["n_passages"] == 100
        assert manifest["retriever_fingerprint"].startswith("bm25:")
        assert manifest["config"]["pipeline"]["topology"] == "sequential"
        assert manifest["config"]["generator"]["model"] == "mock-qa"  # defaults recorded
        assert set(manifest["cache"]) == {"hits", "misses"}
        assert manifest["timings"]["total_s"] >= 0
        assert manifest["versions"]["ragforge"]
        assert "created_at" in manifest

    def test_traces_follow_dataset_order(self, tmp_path):
        result = run_experiment(base_config(tmp_path))
        ids = [t.item_id for t in load_traces(result.run_dir / "traces.jsonl")]
        assert ids == [f"q{i:02d}" for i in range(1, 11)]

    def test_existing_run_requires_force(self, tmp_path):
        cfg = base_config(tmp_path)
        run_experiment(cfg)
        with pytest.raises(RunExistsError, match="already exists"):
            run_experiment(cfg)
        run_experiment(cfg, force=True)  # replaces cleanly

    def test_force_clears_stale_artifacts(self, tmp_path):
        cfg = base_config(tmp_path)
        result = run_experiment(cfg)
        stale = result.run_dir / "leftover.txt"
        stale.write_text("old", encoding="utf-8")
        run_experiment(cfg, force=True)
        assert not stale.exists()

    def test_artifacts_deterministic_across_runs(self, tmp_path):
        cfg = base_config(tmp_path)
        first = run_experiment(cfg)
        traces_1 = (first.run_dir / "traces.jsonl").read_bytes()
        report_1 = (first.run_dir / "report.json").read_bytes()
        second = run_experiment(cfg, force=True)
        assert (second.run_dir / "traces.jsonl").read_bytes() == traces_1
        assert (second.run_dir / "report.json").read_bytes() == report_1

    def test_parallel_matches_serial(self, tmp_path):
        cfg = base_config(tmp_path)
        serial = run_experiment(cfg)
        serial_bytes = (serial.run_dir / "traces.jsonl").read_bytes()
        cfg2 = base_config(tmp_path, max_workers=4, run_id="test_run_par")
        parallel = run_experiment(cfg2)
        assert (parallel.run_dir / "traces.jsonl").read_bytes() == serial_bytes

    def test_missing_dataset_file(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["dataset"]["path"] = str(tmp_path / "nope.jsonl")
        with pytest.raises(ConfigError, match="dataset file not found"):
            run_experiment(cfg)

    def test_missing_corpus_file(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["corpus"]["path"] = str(tmp_path / "nope.jsonl")
        with pytest.raises(ConfigError, match="corpus file not found"):
            run_experiment(cfg)

    def test_report_has_requested_metrics(self, tmp_path):
        result = run_experiment(base_config(tmp_path))
        assert set(result.report.aggregate) >= {"em", "f1", "accuracy"}
        assert "retrieval_recall" in result.report.aggregate

    def test_cache_persists_and_serves_second_run(self, tmp_path):
        cache_path = tmp_path / "retrieval_cache.jsonl"
        cfg = base_config(tmp_path)
        cfg["retrieval"] = {"cache_path": str(cache_path)}
        first = run_experiment(cfg)
        assert cache_path.exists()
        assert first.manifest["cache"]["misses"] == 10
        assert first.manifest["cache"]["hits"] == 0
        second = run_experiment(cfg, force=True)
        assert second.manifest["cache"]["hits"] == 10
        assert second.manifest["cache"]["misses"] == 0
        # answers unaffected by the cache layer
        assert [t.final_answer for t in second.traces] == [
            t.final_answer for t in first.traces
        ]

    def test_on_step_listener_receives_events(self, tmp_path):
        seen = []
        cfg = base_config(tmp_path)
        cfg["dataset"]["sample"] = 2
        run_experiment(cfg, on_step=lambda item_id, step: seen.append((item_id, step.kind)))
        assert ("q01", "final") in seen
        assert ("q02", "retrieve") in seen


class TestSweep:
    def test_axis_values_produce_one_run_each(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["dataset"]["sample"] = 3
        result = run_sweep(cfg, axis="pipeline.top_k", values=[1, 3])
        assert [row["value"] for row in result.rows] == [1, 3]
        assert [row["run_id"] for row in result.rows] == [
            "test_run_top_k=1",
            "test_run_top_k=3",
        ]
        for row in result.rows:
            assert (tmp_path / "out" / row["run_id"] / "report.json").exists()
            assert "em" in row["aggregate"]

    def test_summary_file_written(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["dataset"]["sample"] = 2
        result = run_sweep(cfg, axis="pipeline.top_k", values=[1, 2])
        summary = json.loads(result.summary_path.read_text())
        assert summary["axis"] == "pipeline.top_k"
        assert summary["values"] == [1, 2]
        assert len(summary["rows"]) == 2

    def test_axis_from_config_section(self, tmp_path):
        cfg = base_config(tmp_path)
        cfg["dataset"]["sample"] = 2
        cfg["sweep"] = {"axis": "pipeline.top_k", "values": [1, 2]}
        result = run_sweep(cfg)
        assert len(result.rows) == 2

    def test_missing_axis_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="sweep"):
            run_sweep(base_config(tmp_path))

    def test_invalid_axis_value_rejected(self, tmp_path):
        with pytest.raises(ConfigError, match="top_k"):
            run_sweep(base_config(tmp_path), axis="pipeline.top_k", values=[0])

    def test_table_layout(self, tmp_path):
        rows = [
            {"value": 1, "run_id": "r1", "aggregate": {"em": 0.5, "f1": 0.625}},
            {"value": 10, "run_id": "r2", "aggregate": {"em": 0.75, "f1": 0.8}},
        ]
        table = format_sweep_table("pipeline.top_k", rows)
        lines = table.splitlines()
        assert len(lines) == 4  # header, divider, two rows
        assert lines[0].split() == ["pipeline.top_k", "em", "f1"]
        assert lines[2].split() == ["1", "0.5000", "0.6250"]
        assert lines[3].split() == ["10", "0.7500", "0.8000"]
        # columns are aligned: every line has equal width
        assert len({len(line) for line in lines}) == 1


def write_yaml(path, cfg):
    path.write_text(yaml.safe_dump(cfg), encoding="utf-8")
    return str(path)


class TestCli:
    def test_chunk_command(self, tmp_path, capsys):
        docs = tmp_path / "docs.jsonl"
        docs.write_text(
            json.dumps(
                {
                    "id": "doc1",
                    "title": "T",
                    "contents": "One ripe fact. Two ripe facts. Three ripe facts. Four more.",
                }
            )
            + "\n",
            encoding="utf-8",
        )
        out = tmp_path / "passages.jsonl"
        code = main(
            ["chunk", "--input", str(docs), "--out", str(out), "--size", "2", "--stride", "2"]
        )
        assert code == 0
        store = load_corpus(out)
        assert len(store) == 2
        assert "wrote 2 passages from 1 documents" in capsys.readouterr().out

    def test_chunk_rejects_malformed_documents(self, tmp_path, capsys):
        docs = tmp_path / "docs.jsonl"
        docs.write_text('{"id": "d", "text": "missing contents"}\n', encoding="utf-8")
        code = main(["chunk", "--input", str(docs), "--out", str(tmp_path / "o.jsonl")])
        assert code == 2
        assert "error:" in capsys.readouterr().err

    def test_index_command(self, tmp_path, corpus_path, capsys):
        out = tmp_path / "bm25.index"
        code = main(["index", "--corpus", str(corpus_path), "--out", str(out)])
        assert code == 0
        assert InvertedIndex.from_jsonl(out).N == 100
        assert "indexed 100 passages" in capsys.readouterr().out

    def test_run_command(self, tmp_path, capsys):
        config_path = write_yaml(tmp_path / "run.yaml", base_config(tmp_path))
        code = main(["run", "--config", config_path])
        assert code == 0
        out = capsys.readouterr().out
        assert "run test_run ->" in out
        assert "em:" in out
        assert (tmp_path / "out" / "test_run" / "traces.jsonl").exists()

    def test_run_refuses_overwrite_without_force(self, tmp_path, capsys):
        config_path = write_yaml(tmp_path / "run.yaml", base_config(tmp_path))
        assert main(["run", "--config", config_path]) == 0
        capsys.readouterr()
        assert main(["run", "--config", config_path]) == 2
        assert "already exists" in capsys.readouterr().err
        assert main(["run", "--config", config_path, "--force"]) == 0

    def test_run_sample_flag(self, tmp_path, capsys):
        config_path = write_yaml(tmp_path / "run.yaml", base_config(tmp_path))
        assert main(["run", "--config", config_path, "--sample", "3"]) == 0
        manifest = json.loads((tmp_path / "out" / "test_run" / "manifest.json").read_text())
        assert manifest["dataset"]["n_items"] == 3

    def test_run_bad_config(self, tmp_path, capsys):
        config_path = write_yaml(tmp_path / "run.yaml", {"pipeline": {"topology": "bogus"}})
        assert main(["run", "--config", config_path]) == 2
        assert "error:" in capsys.readouterr().err

    def test_sweep_command(self, tmp_path, capsys):
        cfg = base_config(tmp_path)
        cfg["dataset"]["sample"] = 2
        config_path = write_yaml(tmp_path / "run.yaml", cfg)
        code = main(
            ["sweep", "--config", config_path, "--axis", "pipeline.top_k", "--values", "1,3"]
        )
        assert code == 0
        out = capsys.readouterr().out
        assert "pipeline.top_k" in out
        assert "summary:" in out
        assert (tmp_path / "out" / "test_run_sweep.json").exists()

    def test_eval_command(self, tmp_path, dataset_path, capsys):
        result = run_experiment(base_config(tmp_path))
        report_out = tmp_path / "report.json"
        csv_out = tmp_path / "aggregate.csv"
        code = main(
            [
                "eval",
                "--traces", str(result.run_dir / "traces.jsonl"),
                "--dataset", str(dataset_path),
                "--metrics", "em,f1",
                "--out", str(report_out),
                "--csv", str(csv_out),
            ]
        )
        assert code == 0
        report = json.loads(report_out.read_text())
        assert set(report["aggregate"]) == {"em", "f1"}
        assert csv_out.read_text().splitlines()[0] == "em,f1"
        assert "em:" in capsys.readouterr().out

    def test_eval_matches_run_report(self, tmp_path, dataset_path, capsys):
        cfg = base_config(tmp_path)
        cfg["evaluate"]["metrics"] = ["em", "f1", "accuracy"]
        result = run_experiment(cfg)
        report_out = tmp_path / "replayed.json"
        main(
            [
                "eval",
                "--traces", str(result.run_dir / "traces.jsonl"),
                "--dataset", str(dataset_path),
                "--metrics", "em,f1,accuracy",
                "--out", str(report_out),
            ]
        )
        replayed = json.loads(report_out.read_text())
        assert replayed["aggregate"] == result.report.aggregate
