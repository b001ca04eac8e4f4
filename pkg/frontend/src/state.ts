/**
 * Run-console state: a pure reducer over the run's event stream.
 *
 * All UI state for a live run is derived by folding server events into a
 * RunView; there is no client-only truth, so a view can always be rebuilt
 * by replaying the stream from event 1 (or the persisted trace). Events
 * carry monotonically increasing ids; anything at or below the last applied
 * id is dropped, which makes reconnect overlap harmless.
 */

import type { RunEvent, StepEvent } from "./types.js";
import { isStepEvent } from "./types.js";
import type { SseMessage } from "./sse.js";

/** One rendered step: the event plus its stream sequence number. */
export interface SeqStep {
  seq: number;
  event: StepEvent;
}

export interface ItemView {
  itemId: string;
  steps: SeqStep[];
  finalAnswer: string | null;
  error: string | null;
  done: boolean;
}

export type RunStatus = "idle" | "running" | "done" | "error";

export interface RunView {
  runId: string | null;
  status: RunStatus;
  nItems: number;
  /** Every step event in arrival order (ordering = sequence number). */
  steps: SeqStep[];
  /** Per-item grouping, in first-seen order. */
  items: ItemView[];
  /** Count of items that finished with an error. */
  errorCount: number;
  /** Highest event id applied; resume point for reconnects. */
  lastEventId: number;
}

export function initialRunView(): RunView {
  return {
    runId: null,
    status: "idle",
    nItems: 0,
    steps: [],
    items: [],
    errorCount: 0,
    lastEventId: 0,
  };
}

function itemView(view: RunView, itemId: string): { view: RunView; item: ItemView } {
  const existing = view.items.find((item) => item.itemId === itemId);
  if (existing !== undefined) return { view, item: existing };
  const item: ItemView = { itemId, steps: [], finalAnswer: null, error: null, done: false };
  return { view: { ...view, items: [...view.items, item] }, item };
}

function replaceItem(view: RunView, updated: ItemView): RunView {
  return {
    ...view,
    items: view.items.map((item) => (item.itemId === updated.itemId ? updated : item)),
  };
}

/**
 * Fold one parsed SSE message into the view. Pure: returns a new view and
 * never mutates the input. Unparseable or already-seen events are ignored.
 */
export function applyEvent(view: RunView, message: SseMessage): RunView {
  const seq = message.id === null ? view.lastEventId + 1 : Number(message.id);
  if (!Number.isFinite(seq) || seq <= view.lastEventId) return view; // replay overlap
  let event: RunEvent;
  try {
    event = JSON.parse(message.data) as RunEvent;
  } catch {
    return view;
  }
  let next: RunView = { ...view, lastEventId: seq };

  if (event.kind === "run_started") {
    return { ...next, runId: event.run_id, status: "running", nItems: event.n_items };
  }
  if (event.kind === "item_done") {
    const resolved = itemView(next, event.item_id);
    next = resolved.view;
    const updated: ItemView = {
      ...resolved.item,
      finalAnswer: event.final_answer,
      error: event.error,
      done: true,
    };
    next = replaceItem(next, updated);
    if (event.error !== null) next = { ...next, errorCount: next.errorCount + 1 };
    return next;
  }
  if (event.kind === "run_done") {
    return { ...next, status: event.status === "done" ? "done" : "error" };
  }
  if (isStepEvent(event)) {
    const step: SeqStep = { seq, event };
    const resolved = itemView(next, event.item_id);
    next = resolved.view;
    next = { ...next, steps: [...next.steps, step] };
    const updated: ItemView = { ...resolved.item, steps: [...resolved.item.steps, step] };
    return replaceItem(next, updated);
  }
  return next;
}

/** Replay a whole message list (e.g. a recorded stream) into a view. */
export function replay(messages: SseMessage[], from?: RunView): RunView {
  let view = from ?? initialRunView();
  for (const message of messages) view = applyEvent(view, message);
  return view;
}

/** Items finished so far — drives the progress view for running runs. */
export function itemsDone(view: RunView): number {
  return view.items.filter((item) => item.done).length;
}
