"""Config validation: strict keys, typed leaves, defaults, cross-field rules."""

from __future__ import annotations

import pytest

from ragforge.config import ConfigError, apply_override, load_config, validate_config


def minimal(**sections) -> dict:
    cfg = {
        "dataset": {"path": "data/dataset.jsonl"},
        "corpus": {"path": "data/corpus.jsonl"},
        "pipeline": {"topology": "sequential"},
    }
    for name, value in sections.items():
        if isinstance(value, dict) and isinstance(cfg.get(name), dict):
            cfg[name].update(value)
        else:
            cfg[name] = value
    return cfg


class TestDefaults:
    def test_minimal_config_is_fully_populated(self):
        cfg = validate_config(minimal())
        assert cfg["run_id"] is None
        assert cfg["out_dir"] == "out"
        assert cfg["seed"] == 0
        assert cfg["max_workers"] == 1
        assert cfg["dataset"]["split"] == "test"
        assert cfg["dataset"]["sample"] is None
        assert cfg["dataset"]["sample_mode"] == "sequential"
        assert cfg["retrieval"]["method"] == "bm25"
        assert cfg["retrieval"]["bm25"] == {"k1": 0.9, "b": 0.4, "index_path": None}
        assert cfg["retrieval"]["dense"]["metric"] == "inner_product"
        assert cfg["generator"]["max_input_tokens"] == 2048
        assert cfg["generator"]["max_new_tokens"] == 32
        assert cfg["generator"]["temperature"] == 0.0
        assert cfg["embedding"]["batch_size"] == 1024
        assert cfg["refine"]["method"] is None
        assert cfg["refine"]["budget_ratio"] == 0.55
        assert cfg["pipeline"]["top_k"] == 5
        assert cfg["pipeline"]["flare_theta"] == 0.8
        assert cfg["evaluate"]["metrics"] == ["em", "f1", "accuracy"]
        assert cfg["evaluate"]["retrieval_k"] == 5
        assert cfg["sweep"] == {"axis": None, "values": None}

    def test_default_lists_are_not_shared_between_configs(self):
        first = validate_config(minimal())
        first["evaluate"]["metrics"].append("bleu")
        second = validate_config(minimal())
        assert second["evaluate"]["metrics"] == ["em", "f1", "accuracy"]

    def test_input_mapping_is_not_mutated(self):
        raw = minimal()
        validate_config(raw)
        assert "generator" not in raw


class TestRequiredKeys:
    def test_missing_dataset_path(self):
        cfg = minimal()
        del cfg["dataset"]["path"]
        with pytest.raises(ConfigError, match=r"missing required config key 'dataset\.path'"):
            validate_config(cfg)

    def test_missing_topology(self):
        cfg = minimal()
        cfg["pipeline"] = {}
        with pytest.raises(ConfigError, match=r"pipeline\.topology"):
            validate_config(cfg)

    def test_missing_corpus_section_entirely(self):
        cfg = minimal()
        del cfg["corpus"]
        with pytest.raises(ConfigError, match=r"corpus\.path"):
            validate_config(cfg)


class TestUnknownKeys:
    def test_top_level_typo_gets_suggestion(self):
        with pytest.raises(ConfigError, match=r"unknown config key 'pipelnie'.*'pipeline'"):
            validate_config(minimal(pipelnie={"topology": "sequential"}))

    def test_nested_typo_names_full_path(self):
        cfg = minimal()
        cfg["dataset"]["pth"] = "x"
        with pytest.raises(ConfigError, match=r"'dataset\.pth'.*did you mean 'path'"):
            validate_config(cfg)

    def test_unrelated_key_has_no_suggestion(self):
        cfg = minimal()
        cfg["zzqq"] = 1
        with pytest.raises(ConfigError) as err:
            validate_config(cfg)
        assert "did you mean" not in str(err.value)


class TestLeafValidation:
    def test_wrong_type_names_path_and_types(self):
        with pytest.raises(ConfigError, match=r"seed must be int, got str"):
            validate_config(minimal(seed="zero"))

    def test_bool_is_not_an_int(self):
        with pytest.raises(ConfigError, match="got bool"):
            validate_config(minimal(seed=True))

    def test_section_must_be_mapping(self):
        with pytest.raises(ConfigError, match="dataset must be a mapping"):
            validate_config(minimal(dataset=["x"]))

    def test_choices_enforced(self):
        cfg = minimal()
        cfg["dataset"]["split"] = "validation"
        with pytest.raises(ConfigError, match=r"dataset\.split must be one of"):
            validate_config(cfg)

    def test_minimum_enforced(self):
        cfg = minimal(pipeline={"topology": "sequential", "top_k": 0})
        with pytest.raises(ConfigError, match=r"pipeline\.top_k must be >= 1"):
            validate_config(cfg)

    def test_maximum_enforced(self):
        cfg = minimal(pipeline={"topology": "flare", "flare_theta": 1.5})
        with pytest.raises(ConfigError, match=r"flare_theta must be <= 1.0"):
            validate_config(cfg)

    def test_theta_bounds_inclusive(self):
        for theta in (0.0, 1.0):
            cfg = validate_config(minimal(pipeline={"topology": "flare", "flare_theta": theta}))
            assert cfg["pipeline"]["flare_theta"] == theta

    def test_float_accepted_where_number_expected(self):
        cfg = validate_config(minimal(generator={"temperature": 0.7}))
        assert cfg["generator"]["temperature"] == 0.7

    def test_int_accepted_where_number_expected(self):
        cfg = validate_config(minimal(generator={"temperature": 1}))
        assert cfg["generator"]["temperature"] == 1

    def test_non_nullable_rejects_null(self):
        with pytest.raises(ConfigError, match="out_dir must not be null"):
            validate_config(minimal(out_dir=None))

    def test_nullable_accepts_null(self):
        assert validate_config(minimal(run_id=None))["run_id"] is None

    def test_metric_list_element_type(self):
        cfg = minimal(evaluate={"metrics": ["em", 3]})
        with pytest.raises(ConfigError, match=r"evaluate\.metrics\[1\] must be str"):
            validate_config(cfg)

    def test_metric_list_element_choices(self):
        cfg = minimal(evaluate={"metrics": ["em", "wer"]})
        with pytest.raises(ConfigError, match=r"evaluate\.metrics\[1\] must be one of"):
            validate_config(cfg)

    def test_known_metric_names_accepted(self):
        cfg = minimal(evaluate={"metrics": ["em", "f1", "accuracy", "bleu", "rouge_l", "retrieval"]})
        validate_config(cfg)


class TestCrossChecks:
    def test_conditional_requires_judge_training(self):
        cfg = minimal(pipeline={"topology": "conditional"})
        with pytest.raises(ConfigError, match=r"judge\.training_path"):
            validate_config(cfg)
        cfg["judge"] = {"training_path": "judge.jsonl"}
        validate_config(cfg)

    def test_remote_rerank_requires_endpoint(self):
        cfg = minimal(retrieval={"rerank": {"method": "remote"}})
        with pytest.raises(ConfigError, match=r"rerank\.endpoint"):
            validate_config(cfg)

    def test_rerank_depth_below_top_k(self):
        cfg = minimal(
            pipeline={"topology": "sequential", "top_k": 10},
            retrieval={"rerank": {"method": "bi_encoder", "depth": 5}},
        )
        with pytest.raises(ConfigError, match=r"depth \(5\) must be >= pipeline\.top_k \(10\)"):
            validate_config(cfg)

    def test_no_retrieval_only_with_sequential(self):
        cfg = minimal(retrieval={"method": "none"}, pipeline={"topology": "flare"})
        with pytest.raises(ConfigError, match="only supports the sequential topology"):
            validate_config(cfg)
        validate_config(minimal(retrieval={"method": "none"}))

    def test_external_method_requires_cache_path(self):
        cfg = minimal(retrieval={"method": "external"})
        with pytest.raises(ConfigError, match="external_cache"):
            validate_config(cfg)
        cfg["retrieval"]["external_cache"] = "runs.jsonl"
        validate_config(cfg)

    def test_sweep_axis_and_values_together(self):
        with pytest.raises(ConfigError, match="set together"):
            validate_config(minimal(sweep={"axis": "pipeline.top_k"}))
        with pytest.raises(ConfigError, match="set together"):
            validate_config(minimal(sweep={"values": [1, 3]}))
        validate_config(minimal(sweep={"axis": "pipeline.top_k", "values": [1, 3]}))

    def test_sweep_values_must_be_nonempty(self):
        with pytest.raises(ConfigError, match="must not be empty"):
            validate_config(minimal(sweep={"axis": "pipeline.top_k", "values": []}))


class TestLoadConfig:
    def test_yaml_roundtrip(self, tmp_path):
        path = tmp_path / "run.yaml"
        path.write_text(
            "dataset:\n  path: d.jsonl\ncorpus:\n  path: c.jsonl\n"
            "pipeline:\n  topology: iter_retgen\n  n_iter: 2\n",
            encoding="utf-8",
        )
        cfg = load_config(path)
        assert cfg["pipeline"]["topology"] == "iter_retgen"
        assert cfg["pipeline"]["n_iter"] == 2
        assert cfg["generator"]["model"] == "mock-qa"  # defaults still filled

    def test_empty_file_reports_missing_keys(self, tmp_path):
        path = tmp_path / "empty.yaml"
        path.write_text("", encoding="utf-8")
        with pytest.raises(ConfigError, match="missing required"):
            load_config(path)

    def test_top_level_list_rejected(self, tmp_path):
        path = tmp_path / "bad.yaml"
        path.write_text("- a\n- b\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="top level must be a mapping"):
            load_config(path)


class TestApplyOverride:
    def test_sets_nested_value(self):
        cfg = validate_config(minimal())
        out = apply_override(cfg, "pipeline.top_k", 9)
        assert out["pipeline"]["top_k"] == 9
        assert cfg["pipeline"]["top_k"] == 5  # original untouched

    def test_revalidates_new_value(self):
        cfg = validate_config(minimal())
        with pytest.raises(ConfigError, match="top_k must be >= 1"):
            apply_override(cfg, "pipeline.top_k", -1)

    def test_revalidates_cross_checks(self):
        cfg = validate_config(minimal())
        with pytest.raises(ConfigError, match="sweep"):
            apply_override(cfg, "sweep.axis", "pipeline.top_k")

    def test_unknown_path_rejected(self):
        cfg = validate_config(minimal())
        with pytest.raises(ConfigError, match="unknown config path 'pipeline.depth'"):
            apply_override(cfg, "pipeline.depth", 3)
        with pytest.raises(ConfigError, match="unknown config path"):
            apply_override(cfg, "nope.nope", 3)

    def test_top_level_override(self):
        cfg = validate_config(minimal())
        assert apply_override(cfg, "seed", 7)["seed"] == 7
