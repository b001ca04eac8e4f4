"""Structured execution traces: every pipeline run is a replayable record.

A trace is an ordered list of typed steps (retrieve, prompt, generate, ...)
plus the final answer. Serialization is deterministic — same inputs and
components produce byte-identical JSON lines — so trace files can be diffed
and checked in as regression goldens. Wall-clock timings are kept on the
in-memory steps for profiling but deliberately left out of the serialized
form, which would otherwise never be reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

STEP_KINDS = (
    "judger",
    "retrieve",
    "rerank",
    "refine",
    "prompt",
    "generate",
    "iteration",
    "final",
    "error",
)


@dataclass
class TraceStep:
    """One pipeline event: what happened (`kind`) and its inputs/outputs."""

    kind: str
    payload: dict
    iteration: int | None = None
    elapsed_ms: float | None = None  # profiling only; never serialized

    def __post_init__(self):
        if self.kind not in STEP_KINDS:
            raise ValueError(f"unknown step kind {self.kind!r}; expected one of {STEP_KINDS}")

    def to_dict(self) -> dict:
        out: dict = {"kind": self.kind, "payload": self.payload}
        if self.iteration is not None:
            out["iteration"] = self.iteration
        return out

    @classmethod
    def from_dict(cls, obj: dict) -> "TraceStep":
        return cls(kind=obj["kind"], payload=obj["payload"], iteration=obj.get("iteration"))


@dataclass
class PipelineTrace:
    """Full record of one item's journey through a pipeline."""

    item_id: str
    question: str = ""
    steps: list[TraceStep] = field(default_factory=list)
    final_answer: str = ""
    flags: list[str] = field(default_factory=list)
    error: str | None = None
    listener: Callable[[TraceStep], None] | None = field(
        default=None, repr=False, compare=False
    )  # live step observer (e.g. event streaming); never serialized

    def add(
        self,
        kind: str,
        payload: dict,
        iteration: int | None = None,
        elapsed_ms: float | None = None,
    ) -> TraceStep:
        step = TraceStep(kind=kind, payload=payload, iteration=iteration, elapsed_ms=elapsed_ms)
        self.steps.append(step)
        if self.listener is not None:
            self.listener(step)
        return step

    def flag(self, name: str) -> None:
        if name not in self.flags:
            self.flags.append(name)

    def steps_of(self, kind: str) -> list[TraceStep]:
        return [s for s in self.steps if s.kind == kind]

    def first_retrieval_texts(self) -> list[str] | None:
        """Passage contents from the first retrieval, in rank order.

        Returns None when the trace contains no retrieval at all (so callers
        can tell "did not retrieve" apart from "retrieved nothing").
        """
        for step in self.steps:
            if step.kind == "retrieve":
                return [r["contents"] for r in step.payload.get("results", [])]
        return None

    def token_usage(self) -> dict:
        usage = {"prompt_tokens": 0, "generated_tokens": 0, "generate_calls": 0}
        refine_in = refine_out = 0
        saw_refine = False
        for step in self.steps:
            if step.kind == "generate":
                usage["prompt_tokens"] += step.payload.get("prompt_tokens", 0)
                usage["generated_tokens"] += step.payload.get("generated_tokens", 0)
                usage["generate_calls"] += 1
            elif step.kind == "refine":
                saw_refine = True
                refine_in += step.payload.get("input_words", 0)
                refine_out += step.payload.get("output_words", 0)
        if saw_refine:
            usage["refine_input_words"] = refine_in
            usage["refine_output_words"] = refine_out
        return usage

    def to_dict(self) -> dict:
        out: dict = {
            "item_id": self.item_id,
            "question": self.question,
            "steps": [s.to_dict() for s in self.steps],
            "final_answer": self.final_answer,
        }
        if self.flags:
            out["flags"] = list(self.flags)
        if self.error is not None:
            out["error"] = self.error
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, obj: dict) -> "PipelineTrace":
        return cls(
            item_id=obj["item_id"],
            question=obj.get("question", ""),
            steps=[TraceStep.from_dict(s) for s in obj.get("steps", [])],
            final_answer=obj.get("final_answer", ""),
            flags=list(obj.get("flags", [])),
            error=obj.get("error"),
        )

    @classmethod
    def parse(cls, line: str) -> "PipelineTrace":
        return cls.from_dict(json.loads(line))


def save_traces(traces: list[PipelineTrace], path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for trace in traces:
            handle.write(trace.to_json() + "\n")


def load_traces(path) -> list[PipelineTrace]:
    traces = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                traces.append(PipelineTrace.parse(line))
    return traces
