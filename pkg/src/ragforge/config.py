"""Experiment configuration: YAML in, validated and defaulted dict out.

Validation is strict — unknown keys are rejected (with a did-you-mean
suggestion), values are type- and range-checked, and every error names the
offending dotted key path. The normalized dict always contains every key
with its default filled in, so downstream code never guards for absence.
"""

from __future__ import annotations

import copy
import difflib
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import yaml

from .dataset import SPLITS
from .dense import METRICS as DENSE_METRICS
from .evaluate import KNOWN_METRICS
from .pipelines import TOPOLOGIES


class ConfigError(ValueError):
    """Raised for malformed, mistyped, or out-of-range configuration."""


_REQUIRED = object()


@dataclass(frozen=True)
class Option:
    """One leaf config value: accepted types, default, and constraints."""

    types: tuple
    default: Any = _REQUIRED
    nullable: bool = False
    choices: tuple | None = None
    minimum: float | None = None
    maximum: float | None = None
    element_types: tuple | None = None  # for list values
    element_choices: tuple | None = None

    @property
    def required(self) -> bool:
        return self.default is _REQUIRED


def _str(default=_REQUIRED, nullable=False, choices=None) -> Option:
    return Option((str,), default=default, nullable=nullable, choices=choices)


def _int(default=_REQUIRED, minimum=None, maximum=None, nullable=False) -> Option:
    return Option((int,), default=default, minimum=minimum, maximum=maximum, nullable=nullable)


def _num(default=_REQUIRED, minimum=None, maximum=None) -> Option:
    return Option((int, float), default=default, minimum=minimum, maximum=maximum)


SCHEMA: dict = {
    "run_id": _str(default=None, nullable=True),
    "out_dir": _str(default="out"),
    "seed": _int(default=0, minimum=0),
    "max_workers": _int(default=1, minimum=1),
    "dataset": {
        "path": _str(),
        "split": _str(default="test", choices=SPLITS),
        "name": _str(default=None, nullable=True),
        "sample": _int(default=None, minimum=1, nullable=True),
        "sample_mode": _str(default="sequential", choices=("sequential", "random")),
    },
    "corpus": {
        "path": _str(),
    },
    "embedding": {
        "endpoint": _str(default="mock://embedder"),
        "model": _str(default="mock-embed"),
        "batch_size": _int(default=1024, minimum=1),
        "query_prefix": _str(default=""),
        "passage_prefix": _str(default=""),
        "timeout": _num(default=30.0, minimum=0),
    },
    "retrieval": {
        "method": _str(default="bm25", choices=("bm25", "dense", "external", "none")),
        "bm25": {
            "k1": _num(default=0.9, minimum=0),
            "b": _num(default=0.4, minimum=0, maximum=1),
            "index_path": _str(default=None, nullable=True),
        },
        "dense": {
            "metric": _str(default="inner_product", choices=DENSE_METRICS),
            "vectors_path": _str(default=None, nullable=True),
        },
        "cache_path": _str(default=None, nullable=True),
        "external_cache": _str(default=None, nullable=True),
        "rerank": {
            "method": _str(default=None, nullable=True, choices=("bi_encoder", "remote")),
            "depth": _int(default=None, minimum=1, nullable=True),
            "endpoint": _str(default=None, nullable=True),
            "model": _str(default=None, nullable=True),
        },
    },
    "generator": {
        "endpoint": _str(default="mock://generator"),
        "model": _str(default="mock-qa"),
        "max_input_tokens": _int(default=2048, minimum=1),
        "max_new_tokens": _int(default=32, minimum=1),
        "temperature": _num(default=0.0, minimum=0),
        "timeout": _num(default=30.0, minimum=0),
        "max_retries": _int(default=2, minimum=0),
    },
    "refine": {
        "method": _str(
            default=None, nullable=True, choices=("extractive", "perplexity", "abstractive")
        ),
        "keep_ratio": _num(default=0.5, minimum=0, maximum=1),
        "word_budget": _int(default=None, minimum=1, nullable=True),
        "budget_ratio": _num(default=0.55, minimum=0, maximum=1),
        "max_tokens": _int(default=64, minimum=1),
    },
    "judge": {
        "training_path": _str(default=None, nullable=True),
        "k": _int(default=5, minimum=1),
    },
    "pipeline": {
        "topology": _str(choices=TOPOLOGIES),
        "top_k": _int(default=5, minimum=1),
        "flare_theta": _num(default=0.8, minimum=0.0, maximum=1.0),
        "n_iter": _int(default=3, minimum=1),
        "max_rounds": _int(default=5, minimum=1),
    },
    "evaluate": {
        "metrics": Option(
            (list,),
            default=["em", "f1", "accuracy"],
            element_types=(str,),
            element_choices=tuple(KNOWN_METRICS),
        ),
        "retrieval_k": _int(default=5, minimum=1),
    },
    "sweep": {
        "axis": _str(default=None, nullable=True),
        "values": Option((list,), default=None, nullable=True),
    },
}


def _type_names(types: tuple) -> str:
    return " or ".join(t.__name__ for t in types)


def _check_value(value: Any, opt: Option, path: str) -> Any:
    if value is None:
        if opt.nullable or (not opt.required and opt.default is None):
            return None
        raise ConfigError(f"{path} must not be null")
    if isinstance(value, bool) and bool not in opt.types:
        raise ConfigError(f"{path} must be {_type_names(opt.types)}, got bool")
    if not isinstance(value, opt.types):
        raise ConfigError(
            f"{path} must be {_type_names(opt.types)}, got {type(value).__name__}"
        )
    if opt.choices is not None and value not in opt.choices:
        raise ConfigError(f"{path} must be one of {list(opt.choices)}, got {value!r}")
    if opt.minimum is not None and value < opt.minimum:
        raise ConfigError(f"{path} must be >= {opt.minimum}, got {value}")
    if opt.maximum is not None and value > opt.maximum:
        raise ConfigError(f"{path} must be <= {opt.maximum}, got {value}")
    if isinstance(value, list):
        for i, element in enumerate(value):
            if opt.element_types and not isinstance(element, opt.element_types):
                raise ConfigError(
                    f"{path}[{i}] must be {_type_names(opt.element_types)}, "
                    f"got {type(element).__name__}"
                )
            if opt.element_choices and element not in opt.element_choices:
                raise ConfigError(
                    f"{path}[{i}] must be one of {list(opt.element_choices)}, got {element!r}"
                )
    return value


def _apply_section(schema: dict, obj: Any, path: str) -> dict:
    if obj is None:
        obj = {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{path or 'config'} must be a mapping")
    for key in obj:
        if key not in schema:
            full = f"{path}.{key}" if path else str(key)
            close = difflib.get_close_matches(str(key), [str(k) for k in schema], n=1)
            hint = f"; did you mean {close[0]!r}?" if close else ""
            raise ConfigError(f"unknown config key {full!r}{hint}")
    out: dict = {}
    for key, spec in schema.items():
        child = f"{path}.{key}" if path else key
        if isinstance(spec, dict):
            out[key] = _apply_section(spec, obj.get(key), child)
        else:
            if key not in obj:
                if spec.required:
                    raise ConfigError(f"missing required config key {child!r}")
                out[key] = copy.deepcopy(spec.default)
            else:
                out[key] = _check_value(obj[key], spec, child)
    return out


def _cross_checks(cfg: dict) -> None:
    topology = cfg["pipeline"]["topology"]
    if topology == "conditional" and not cfg["judge"]["training_path"]:
        raise ConfigError(
            "pipeline.topology 'conditional' requires judge.training_path"
        )
    rerank = cfg["retrieval"]["rerank"]
    if rerank["method"] == "remote" and not rerank["endpoint"]:
        raise ConfigError("retrieval.rerank.method 'remote' requires retrieval.rerank.endpoint")
    if rerank["depth"] is not None and rerank["depth"] < cfg["pipeline"]["top_k"]:
        raise ConfigError(
            f"retrieval.rerank.depth ({rerank['depth']}) must be >= "
            f"pipeline.top_k ({cfg['pipeline']['top_k']})"
        )
    if cfg["retrieval"]["method"] == "none" and topology != "sequential":
        raise ConfigError(
            f"retrieval.method 'none' only supports the sequential topology, got {topology!r}"
        )
    if cfg["retrieval"]["method"] == "external" and not cfg["retrieval"]["external_cache"]:
        raise ConfigError("retrieval.method 'external' requires retrieval.external_cache")
    sweep = cfg["sweep"]
    if (sweep["axis"] is None) != (sweep["values"] is None):
        raise ConfigError("sweep.axis and sweep.values must be set together")
    if sweep["values"] is not None and not sweep["values"]:
        raise ConfigError("sweep.values must not be empty")


def validate_config(obj: dict) -> dict:
    """Validate a raw mapping, fill defaults, and return the normalized dict."""
    cfg = _apply_section(SCHEMA, obj, "")
    _cross_checks(cfg)
    return cfg


def load_config(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as handle:
        obj = yaml.safe_load(handle)
    if obj is None:
        obj = {}
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return validate_config(obj)


def apply_override(cfg: dict, dotted_key: str, value: Any) -> dict:
    """Return a new config with ``dotted_key`` set to ``value``, re-validated."""
    raw = copy.deepcopy(cfg)
    keys = dotted_key.split(".")
    node = raw
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"unknown config path {dotted_key!r}")
        node = node[key]
    if not isinstance(node, dict) or keys[-1] not in node:
        raise ConfigError(f"unknown config path {dotted_key!r}")
    node[keys[-1]] = value
    return validate_config(raw)
