"""Unified dataset schema, JSONL loading, and sampling/filtering tools.

One JSON object per line with fields ``id``, ``question``,
``golden_answers``, optional ``choices``, and ``metadata``. Unknown extra
fields are folded into metadata so corpus variants load without edits.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

SPLITS = ("train", "dev", "test")

_CORE_FIELDS = {"id", "question", "golden_answers", "choices", "metadata"}


class DatasetError(ValueError):
    """Schema violation while loading or validating a dataset."""


@dataclass
class Item:
    """One evaluation example."""

    id: str
    question: str
    golden_answers: list[str]
    choices: list[str] | None = None
    metadata: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if not self.id:
            raise DatasetError("item id must be non-empty")
        if not self.golden_answers:
            raise DatasetError(f"item {self.id!r}: golden_answers must be non-empty")
        if self.choices is not None:
            for ans in self.golden_answers:
                try:
                    idx = int(ans)
                except ValueError:
                    raise DatasetError(
                        f"item {self.id!r}: golden answer {ans!r} is not an index into choices"
                    ) from None
                if not 0 <= idx < len(self.choices):
                    raise DatasetError(
                        f"item {self.id!r}: choice index {idx} out of range [0, {len(self.choices)})"
                    )

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "id": self.id,
            "question": self.question,
            "golden_answers": list(self.golden_answers),
        }
        if self.choices is not None:
            out["choices"] = list(self.choices)
        out["metadata"] = dict(self.metadata)
        return out


@dataclass
class Dataset:
    """An ordered, immutable-after-load collection of items for one split."""

    name: str
    split: str
    items: list[Item] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.split not in SPLITS:
            raise DatasetError(f"split must be one of {SPLITS}, got {self.split!r}")

    def __len__(self) -> int:
        return len(self.items)

    def by_id(self) -> dict[str, Item]:
        return {item.id: item for item in self.items}


def _item_from_obj(obj: dict, lineno: int) -> Item:
    for key in ("id", "question", "golden_answers"):
        if key not in obj:
            raise DatasetError(f"line {lineno}: missing required field {key!r}")
    metadata = dict(obj.get("metadata") or {})
    for key, value in obj.items():
        if key not in _CORE_FIELDS:
            metadata[key] = value
    item = Item(
        id=str(obj["id"]),
        question=str(obj["question"]),
        golden_answers=[str(a) for a in obj["golden_answers"]],
        choices=[str(c) for c in obj["choices"]] if obj.get("choices") is not None else None,
        metadata=metadata,
    )
    try:
        item.validate()
    except DatasetError as exc:
        raise DatasetError(f"line {lineno}: {exc}") from None
    return item


def load_dataset(path: str | Path, split: str, name: str | None = None) -> Dataset:
    """Load a JSONL split file, preserving file order and enforcing unique ids."""
    path = Path(path)
    items: list[Item] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            item = _item_from_obj(obj, lineno)
            if item.id in seen:
                raise DatasetError(f"line {lineno}: duplicate id {item.id!r}")
            seen.add(item.id)
            items.append(item)
    return Dataset(name=name or path.stem, split=split, items=items)


def save_dataset(ds: Dataset, path: str | Path) -> None:
    """Write one JSON object per line; round-trips through load_dataset."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for item in ds.items:
            fh.write(json.dumps(item.to_dict(), ensure_ascii=False) + "\n")


def select(ds: Dataset, mode: str, n: int, seed: int | None = None) -> Dataset:
    """Take n items sequentially or by seeded random draw without replacement.

    Random selection preserves the items' original relative order so
    downstream traces stay aligned with file order.
    """
    if not 0 <= n <= len(ds.items):
        raise DatasetError(f"cannot select {n} items from dataset of size {len(ds.items)}")
    if mode == "sequential":
        chosen = ds.items[:n]
    elif mode == "random":
        if seed is None:
            raise DatasetError("random selection requires a seed")
        rng = random.Random(seed)
        picked = sorted(rng.sample(range(len(ds.items)), n))
        chosen = [ds.items[i] for i in picked]
    else:
        raise DatasetError(f"unknown selection mode {mode!r}")
    return Dataset(name=ds.name, split=ds.split, items=list(chosen))


def filter_by_metadata(ds: Dataset, key: str, predicate: Callable[[Any], bool]) -> Dataset:
    """Keep items where the metadata key exists and the predicate holds."""
    kept = [it for it in ds.items if key in it.metadata and predicate(it.metadata[key])]
    return Dataset(name=ds.name, split=ds.split, items=kept)
