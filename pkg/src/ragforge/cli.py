"""Command-line entry points: chunk, index, run, sweep, eval, serve."""

from __future__ import annotations

import argparse
import json
import sys

import yaml

from .config import ConfigError, load_config, validate_config
from .corpus import ChunkPolicy, CorpusError, Document, chunk_documents, load_corpus, save_corpus
from .bm25 import InvertedIndex, build_index
from .dataset import DatasetError, load_dataset
from .evaluate import KNOWN_METRICS, evaluate_traces
from .runner import RunExistsError, run_experiment, run_sweep
from .trace import load_traces


def _load_documents(path: str) -> list[Document]:
    docs = []
    with open(path, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path} line {lineno}: invalid JSON: {exc}") from exc
            if "id" not in obj or "contents" not in obj:
                raise CorpusError(f"{path} line {lineno}: expected 'id' and 'contents' fields")
            docs.append(
                Document(id=obj["id"], title=obj.get("title", ""), contents=obj["contents"])
            )
    return docs


def cmd_chunk(args: argparse.Namespace) -> int:
    docs = _load_documents(args.input)
    policy = ChunkPolicy(unit=args.unit, size=args.size, stride=args.stride)
    passages = chunk_documents(docs, policy)
    save_corpus(passages, args.out)
    print(f"wrote {len(passages)} passages from {len(docs)} documents to {args.out}")
    return 0


def cmd_index(args: argparse.Namespace) -> int:
    store = load_corpus(args.corpus)
    index = build_index(store)
    index.to_jsonl(args.out)
    print(f"indexed {index.N} passages ({len(index.postings)} terms) to {args.out}")
    return 0


def _config_with_overrides(args: argparse.Namespace) -> dict:
    with open(args.config, encoding="utf-8") as handle:
        raw = yaml.safe_load(handle) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{args.config}: top level must be a mapping")
    if getattr(args, "sample", None) is not None:
        raw.setdefault("dataset", {})["sample"] = args.sample
    if getattr(args, "seed", None) is not None:
        raw["seed"] = args.seed
    return validate_config(raw)


def _print_aggregate(aggregate: dict) -> None:
    for name in sorted(aggregate):
        print(f"  {name}: {aggregate[name]:.4f}")


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _config_with_overrides(args)
    result = run_experiment(cfg, force=args.force)
    print(f"run {result.run_id} -> {result.run_dir}")
    print(f"items: {result.manifest['dataset']['n_items']}, errors: {len(result.report.errors)}")
    _print_aggregate(result.report.aggregate)
    return 0


def _parse_sweep_values(raw: str) -> list:
    return [yaml.safe_load(piece) for piece in raw.split(",") if piece.strip()]


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _config_with_overrides(args)
    values = _parse_sweep_values(args.values) if args.values else None
    result = run_sweep(cfg, axis=args.axis, values=values, force=args.force)
    print(result.table())
    print(f"summary: {result.summary_path}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    traces = load_traces(args.traces)
    ds = load_dataset(args.dataset, args.split)
    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    report = evaluate_traces(traces, ds.by_id(), metrics, retrieval_k=args.retrieval_k)
    _print_aggregate(report.aggregate)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(report.to_json() + "\n")
        print(f"report: {args.out}")
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as handle:
            handle.write(report.aggregate_csv())
        print(f"csv: {args.csv}")
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(load_config(args.config))
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ragforge", description="Modular retrieval-augmented generation experiments"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("chunk", help="split documents into passages")
    p.add_argument("--input", required=True, help="documents JSONL (id, title, contents)")
    p.add_argument("--out", required=True, help="output passages JSONL")
    p.add_argument("--unit", choices=("sentences", "words"), default="sentences")
    p.add_argument("--size", type=int, default=6, help="units per passage")
    p.add_argument("--stride", type=int, default=6, help="units between passage starts")
    p.set_defaults(func=cmd_chunk)

    p = sub.add_parser("index", help="build a BM25 index from a passage corpus")
    p.add_argument("--corpus", required=True, help="passages JSONL")
    p.add_argument("--out", required=True, help="output index file")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("run", help="run one configured experiment")
    p.add_argument("--config", required=True, help="experiment YAML")
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    p.add_argument("--sample", type=int, help="run only the first N items")
    p.add_argument("--seed", type=int, help="sampling seed override")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run an experiment per value of one config axis")
    p.add_argument("--config", required=True, help="experiment YAML")
    p.add_argument("--axis", help="dotted config path, e.g. pipeline.top_k")
    p.add_argument("--values", help="comma-separated values, e.g. 1,3,5,10")
    p.add_argument("--force", action="store_true")
    p.add_argument("--sample", type=int, help="run only the first N items")
    p.add_argument("--seed", type=int, help="sampling seed override")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("eval", help="score an existing trace file against a dataset")
    p.add_argument("--traces", required=True, help="traces JSONL")
    p.add_argument("--dataset", required=True, help="dataset JSONL")
    p.add_argument("--split", default="test")
    p.add_argument(
        "--metrics",
        default="em,f1,accuracy",
        help=f"comma-separated metric names from {KNOWN_METRICS}",
    )
    p.add_argument("--retrieval-k", type=int, default=5, dest="retrieval_k")
    p.add_argument("--out", help="write the full report JSON here")
    p.add_argument("--csv", help="write a one-row aggregate CSV here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="serve the HTTP API for a workspace")
    p.add_argument("--config", required=True, help="experiment YAML")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8090)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, CorpusError, DatasetError, RunExistsError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
