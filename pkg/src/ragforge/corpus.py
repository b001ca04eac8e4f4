"""Passage corpus model, sentence splitting, and sliding-window chunking.

Chunking slides a window of ``size`` units (sentences or words) forward by
``stride`` units; a final partial window is emitted only when it covers
units no earlier window reached. For S units with S >= size this yields
exactly ceil((S - size) / stride) + 1 windows.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

# Fixed abbreviation list: a terminator directly after one of these does not
# end a sentence. Matched case-insensitively against the preceding word.
ABBREVIATIONS = frozenset(
    {
        "mr.", "mrs.", "ms.", "dr.", "prof.", "sr.", "jr.", "st.",
        "e.g.", "i.e.", "etc.", "vs.", "cf.", "al.", "u.s.", "u.k.",
        "no.", "fig.", "inc.", "ltd.", "co.",
    }
)

_TERMINATOR = re.compile(r"[.!?](?=\s)")


class CorpusError(ValueError):
    """Malformed corpus input or chunk policy."""


@dataclass
class Document:
    """A pre-extracted plain-text source document."""

    id: str
    title: str
    contents: str


@dataclass(frozen=True)
class ChunkPolicy:
    """Window unit, size, and stride for corpus segmentation."""

    unit: str = "sentences"
    size: int = 6
    stride: int = 3

    def __post_init__(self) -> None:
        if self.unit not in ("sentences", "words"):
            raise CorpusError(f"unit must be 'sentences' or 'words', got {self.unit!r}")
        if self.size < 1:
            raise CorpusError("chunk size must be >= 1")
        if not 1 <= self.stride <= self.size:
            raise CorpusError("stride must satisfy 1 <= stride <= size")


@dataclass
class Passage:
    """One retrievable unit produced by chunking."""

    id: str
    title: str
    contents: str
    word_count: int = 0
    span: tuple[int, int] = (0, 0)

    def __post_init__(self) -> None:
        if not self.word_count:
            self.word_count = len(self.contents.split())

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "contents": self.contents}


def split_sentences(text: str) -> list[str]:
    """Split on ., ! or ? followed by whitespace, honoring the abbreviation list.

    Concatenating the result (modulo separating whitespace) reconstructs the
    input; text with no terminator comes back as a single sentence.
    """
    sentences: list[str] = []
    start = 0
    for match in _TERMINATOR.finditer(text):
        end = match.end()
        word_start = end
        while word_start > start and not text[word_start - 1].isspace():
            word_start -= 1
        if text[word_start:end].lower() in ABBREVIATIONS:
            continue
        sentence = text[start:end].strip()
        if sentence:
            sentences.append(sentence)
        start = end
    tail = text[start:].strip()
    if tail:
        sentences.append(tail)
    return sentences


def _windows(n_units: int, size: int, stride: int) -> list[tuple[int, int]]:
    """Start/end unit spans; a window is emitted only if it adds new units."""
    if n_units == 0:
        return []
    spans = []
    start = 0
    while True:
        end = min(start + size, n_units)
        spans.append((start, end))
        if end >= n_units:
            break
        start += stride
    return spans


def chunk_document(doc: Document, policy: ChunkPolicy) -> list[Passage]:
    """Cut a document into sliding-window passages per the policy."""
    if policy.unit == "sentences":
        units = split_sentences(doc.contents)
    else:
        units = doc.contents.split()
    passages = []
    for ordinal, (start, end) in enumerate(_windows(len(units), policy.size, policy.stride)):
        contents = " ".join(units[start:end])
        passages.append(
            Passage(
                id=f"{doc.id}_{ordinal}",
                title=doc.title,
                contents=contents,
                span=(start, end),
            )
        )
    return passages


def chunk_documents(docs: list[Document], policy: ChunkPolicy) -> list[Passage]:
    """Chunk documents independently; output order is document then window."""
    out: list[Passage] = []
    for doc in docs:
        out.extend(chunk_document(doc, policy))
    return out


class PassageStore:
    """Append-only passage collection with O(1) lookup by id."""

    def __init__(self, passages: list[Passage] | None = None):
        self._order: list[str] = []
        self._by_id: dict[str, Passage] = {}
        for p in passages or []:
            self._add(p, lineno=None)

    def _add(self, passage: Passage, lineno: int | None) -> None:
        if passage.id in self._by_id:
            where = f" (line {lineno})" if lineno else ""
            raise CorpusError(f"duplicate passage id {passage.id!r}{where}")
        self._by_id[passage.id] = passage
        self._order.append(passage.id)

    def add(self, passage: Passage) -> None:
        self._add(passage, lineno=None)

    def __contains__(self, passage_id: str) -> bool:
        return passage_id in self._by_id

    def __len__(self) -> int:
        return len(self._order)

    def __iter__(self):
        return (self._by_id[pid] for pid in self._order)

    def ids(self) -> list[str]:
        return list(self._order)

    def get(self, passage_id: str) -> Passage | None:
        return self._by_id.get(passage_id)


def load_corpus(path: str | Path) -> PassageStore:
    """Stream a JSONL corpus file (fields id, title, contents) into a store."""
    store = PassageStore()
    with Path(path).open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {lineno}: malformed JSON ({exc.msg})") from None
            for key in ("id", "title", "contents"):
                if key not in obj:
                    raise CorpusError(f"line {lineno}: missing field {key!r}")
            store._add(
                Passage(id=str(obj["id"]), title=str(obj["title"]), contents=str(obj["contents"])),
                lineno=lineno,
            )
    return store


def save_corpus(passages: list[Passage] | PassageStore, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for p in passages:
            fh.write(json.dumps(p.to_dict(), ensure_ascii=False) + "\n")


@dataclass
class CorpusStats:
    passage_count: int
    avg_word_length: float
    empty: bool = False


def corpus_stats(store: PassageStore) -> CorpusStats:
    """Passage count and mean words per passage (0 with a flag when empty)."""
    if len(store) == 0:
        return CorpusStats(passage_count=0, avg_word_length=0.0, empty=True)
    total = sum(p.word_count for p in store)
    return CorpusStats(passage_count=len(store), avg_word_length=total / len(store))
