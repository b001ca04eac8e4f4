/**
 * Release gate for the UI. Two guarantees, tested end to end against
 * recorded backend traffic (see fixtures/record.py):
 *
 * 1. Stream fidelity — rendering a sequential run's live event stream shows
 *    exactly its step kinds in event order, and the displayed final answer
 *    is character-identical to the persisted trace's final answer.
 * 2. Parameter round-trip — editing top_k in the form and re-running yields
 *    a new run whose retrieval panel shows exactly top_k passages.
 */

import { describe, expect, it } from "vitest";

import { parseTraceNdjson } from "../src/api.js";
import { defaultForm, setParam, setQuestion, toRunRequest, validateForm } from "../src/form.js";
import { findByClass, renderRetrievalPanel, renderRunView, textOf } from "../src/render.js";
import { parseSse } from "../src/sse.js";
import { replay } from "../src/state.js";
import type { PipelinesResponse, RetrievePayload, StartRunResponse } from "../src/types.js";
import { readFixture, readJsonFixture } from "./helpers.js";

const SPECS = readJsonFixture<PipelinesResponse>("pipelines.json").pipelines;

function renderedRun(stem: string) {
  const view = replay(parseSse(readFixture(`${stem}.events.txt`)));
  return { view, rendered: renderRunView(view) };
}

function retrievalRows(stem: string) {
  const { view } = renderedRun(stem);
  const retrieve = view.steps.find((step) => step.event.kind === "retrieve")!;
  const panel = renderRetrievalPanel(retrieve.event.payload as unknown as RetrievePayload);
  return findByClass(panel, "passage-row");
}

describe("UI stream fidelity", () => {
  it("renders a sequential run as exactly its 4 step kinds, in event order", () => {
    const { view, rendered } = renderedRun("run_seq_k5");
    const cards = findByClass(rendered, "step-card");
    expect(cards.map((card) => card.attrs["data-kind"])).toEqual([
      "retrieve",
      "prompt",
      "generate",
      "final",
    ]);
    // Rendered step count equals received step-event count.
    expect(cards).toHaveLength(view.steps.length);
    // Cards appear in stream order.
    const seqs = cards.map((card) => Number(card.attrs["data-seq"]));
    expect([...seqs].sort((a, b) => a - b)).toEqual(seqs);
  });

  it("displays the exact final answer recorded in the persisted trace", () => {
    const { rendered } = renderedRun("run_seq_k5");
    const persisted = parseTraceNdjson(readFixture("run_seq_k5.trace.ndjson"))[0]!;
    const answers = findByClass(rendered, "final-answer").map(textOf);
    expect(answers.length).toBeGreaterThan(0);
    for (const answer of answers) {
      expect(answer).toBe(persisted.final_answer);
    }
    expect(persisted.final_answer.length).toBeGreaterThan(0);
  });

  it("agrees with the persisted trace on the step sequence (stream/trace equivalence)", () => {
    const { view } = renderedRun("run_seq_k5");
    const persisted = parseTraceNdjson(readFixture("run_seq_k5.trace.ndjson"))[0]!;
    expect(view.steps.map((step) => step.event.kind)).toEqual(
      persisted.steps.map((step) => step.kind),
    );
  });
});

describe("parameter round-trip", () => {
  it("editing top_k 5 → 3 and re-running yields a new run showing exactly 3 passages", () => {
    // Fill the form as the user would: defaults, question, then run.
    let form = defaultForm(SPECS, "sequential");
    form = setQuestion(form, "What causes the sky to appear blue?");
    expect(validateForm(form, SPECS)).toEqual({});

    // The form's request body is byte-for-byte what started the recorded k5 run.
    expect(toRunRequest(form, SPECS)).toEqual(readJsonFixture("run_seq_k5.request.json"));
    const firstStart = readJsonFixture<StartRunResponse>("run_seq_k5.start.json");
    const firstRows = retrievalRows("run_seq_k5");
    expect(firstRows).toHaveLength(5);

    // Edit top_k in the form and re-submit with current values.
    form = setParam(form, "top_k", "3");
    expect(validateForm(form, SPECS)).toEqual({});
    expect(toRunRequest(form, SPECS)).toEqual(readJsonFixture("run_seq_k3.request.json"));

    // The re-run is a distinct run...
    const secondStart = readJsonFixture<StartRunResponse>("run_seq_k3.start.json");
    expect(secondStart.run_id).not.toBe(firstStart.run_id);

    // ...whose retrieval panel shows exactly top_k passages.
    const secondRows = retrievalRows("run_seq_k3");
    expect(secondRows).toHaveLength(3);

    // And the run views carry the respective run ids end to end.
    expect(renderedRun("run_seq_k5").view.runId).toBe(firstStart.run_id);
    expect(renderedRun("run_seq_k3").view.runId).toBe(secondStart.run_id);
  });

  it("the retrieval panel row count tracks the payload's top_k for both runs", () => {
    for (const [stem, expected] of [
      ["run_seq_k5", 5],
      ["run_seq_k3", 3],
    ] as const) {
      const { view } = renderedRun(stem);
      const retrieve = view.steps.find((step) => step.event.kind === "retrieve")!;
      const payload = retrieve.event.payload as unknown as RetrievePayload;
      expect(payload.top_k).toBe(expected);
      expect(payload.results).toHaveLength(expected);
    }
  });
});
