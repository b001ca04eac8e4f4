/**
 * Trace rendering: pure functions from run state to a virtual DOM tree.
 *
 * Renderers return plain VNode objects instead of touching the document, so
 * every panel is testable in Node without a browser; `mount` in dom.ts turns
 * a tree into real elements. Invariants the renderers maintain:
 *   - the timeline renders exactly one card per received step event, in
 *     sequence order;
 *   - the final-answer node's text equals the answer string exactly.
 */

import type {
  FinalPayload,
  GeneratePayload,
  JudgerPayload,
  PromptPayload,
  RefinePayload,
  RetrievePayload,
  RerankPayload,
  StepEvent,
} from "./types.js";
import type { ItemView, RunView, SeqStep } from "./state.js";
import { itemsDone } from "./state.js";

export interface VNode {
  tag: string;
  attrs: Record<string, string>;
  children: (VNode | string)[];
}

export function h(
  tag: string,
  attrs: Record<string, string> = {},
  ...children: (VNode | string | null)[]
): VNode {
  return { tag, attrs, children: children.filter((child): child is VNode | string => child !== null) };
}

/** Recursive text content, the VNode analogue of Node.textContent. */
export function textOf(node: VNode | string): string {
  if (typeof node === "string") return node;
  return node.children.map(textOf).join("");
}

/** Depth-first search for nodes whose class list contains `className`. */
export function findByClass(node: VNode | string, className: string): VNode[] {
  if (typeof node === "string") return [];
  const classes = (node.attrs["class"] ?? "").split(/\s+/);
  const own = classes.includes(className) ? [node] : [];
  return [...own, ...node.children.flatMap((child) => findByClass(child, className))];
}

// ---------------------------------------------------------------------------
// Step panels
// ---------------------------------------------------------------------------

/** Case-insensitive containment check used for golden-answer highlighting. */
export function containsGolden(contents: string, goldens: string[]): boolean {
  const haystack = contents.toLowerCase();
  return goldens.some((golden) => golden.trim() !== "" && haystack.includes(golden.toLowerCase()));
}

/** Wrap golden-answer spans in <mark> so hits are visible in the passage. */
function highlight(contents: string, goldens: string[]): (VNode | string)[] {
  for (const golden of goldens) {
    const needle = golden.trim().toLowerCase();
    if (needle === "") continue;
    const at = contents.toLowerCase().indexOf(needle);
    if (at < 0) continue;
    const before = contents.slice(0, at);
    const match = contents.slice(at, at + needle.length);
    const after = contents.slice(at + needle.length);
    return [before, h("mark", { class: "golden-hit" }, match), ...highlight(after, goldens)];
  }
  return [contents];
}

export function renderRetrievalPanel(payload: RetrievePayload | RerankPayload, goldens: string[] = []): VNode {
  const rows = payload.results.map((hit) => {
    const golden = containsGolden(hit.contents, goldens);
    return h(
      "tr",
      { class: golden ? "passage-row golden" : "passage-row", "data-passage-id": hit.id },
      h("td", { class: "rank" }, String(hit.rank)),
      h("td", { class: "score" }, hit.score.toFixed(4)),
      h("td", { class: "title" }, hit.title),
      h("td", { class: "contents" }, ...highlight(hit.contents, goldens)),
    );
  });
  const cacheNote =
    "cache_hit" in payload && payload.cache_hit ? h("span", { class: "cache-hit" }, "cache hit") : null;
  return h(
    "div",
    { class: "retrieval-panel" },
    h("div", { class: "query" }, `query: ${payload.query}`, cacheNote),
    h(
      "table",
      { class: "passages" },
      h(
        "thead",
        {},
        h("tr", {}, h("th", {}, "rank"), h("th", {}, "score"), h("th", {}, "title"), h("th", {}, "passage")),
      ),
      h("tbody", {}, ...rows),
    ),
  );
}

export function renderRefineDiff(payload: RefinePayload): VNode {
  const saved = payload.input_words - payload.output_words;
  return h(
    "div",
    { class: "refine-diff" },
    h(
      "div",
      { class: "refine-counts" },
      h("span", { class: "input-words" }, String(payload.input_words)),
      " words in → ",
      h("span", { class: "output-words" }, String(payload.output_words)),
      ` words out (${payload.method}, saved ${saved})`,
    ),
    h("pre", { class: "refined-text" }, payload.text),
  );
}

export function renderPromptPreview(payload: PromptPayload): VNode {
  const messages = payload.messages.map((message) =>
    h(
      "div",
      { class: `message role-${message.role}` },
      h("span", { class: "role" }, message.role),
      h("pre", { class: "content" }, message.content),
    ),
  );
  return h("div", { class: "prompt-preview" }, ...messages);
}

/** Probability → heat bucket (0 cold … 4 hot) for per-token shading. */
export function heatBucket(prob: number): number {
  const clamped = Math.max(0, Math.min(1, prob));
  return Math.min(4, Math.floor(clamped * 5));
}

export function renderGenerationPanel(payload: GeneratePayload): VNode {
  const usage = h(
    "div",
    { class: "token-usage" },
    `${payload.prompt_tokens} prompt + ${payload.generated_tokens} generated tokens`,
    payload.purpose !== undefined ? h("span", { class: "purpose" }, ` [${payload.purpose}]`) : null,
  );
  // Per-token probability heat, only for logprob-capable runs.
  const body =
    payload.tokens !== undefined
      ? h(
          "div",
          { class: "generated-text heat" },
          ...payload.tokens.map((token, index) =>
            h(
              "span",
              {
                class: `token heat-${heatBucket(token.prob)}`,
                title: token.prob.toFixed(3),
              },
              index === 0 ? token.token : ` ${token.token}`,
            ),
          ),
        )
      : h("div", { class: "generated-text" }, payload.text);
  return h("div", { class: "generation-panel" }, usage, body);
}

export function renderJudgerPanel(payload: JudgerPayload): VNode {
  return h(
    "div",
    { class: "judger-panel" },
    h("span", { class: "decision" }, payload.decision),
    h("span", { class: "evidence-count" }, ` (${payload.evidence.length} neighbors)`),
  );
}

export function renderFinalAnswer(answer: string): VNode {
  return h("div", { class: "final-answer" }, answer);
}

function renderPanel(event: StepEvent, goldens: string[]): VNode {
  switch (event.kind) {
    case "retrieve":
    case "rerank":
      return renderRetrievalPanel(event.payload as unknown as RetrievePayload, goldens);
    case "refine":
      return renderRefineDiff(event.payload as unknown as RefinePayload);
    case "prompt":
      return renderPromptPreview(event.payload as unknown as PromptPayload);
    case "generate":
      return renderGenerationPanel(event.payload as unknown as GeneratePayload);
    case "judger":
      return renderJudgerPanel(event.payload as unknown as JudgerPayload);
    case "final":
      return renderFinalAnswer((event.payload as unknown as FinalPayload).answer);
    case "error":
      return h("div", { class: "error-panel" }, String(event.payload["message"] ?? ""));
    default:
      return h("pre", { class: "raw-payload" }, JSON.stringify(event.payload));
  }
}

// ---------------------------------------------------------------------------
// Timeline and composition
// ---------------------------------------------------------------------------

/** One card per step event, in sequence order. */
export function renderTimeline(steps: SeqStep[], goldens: string[] = []): VNode {
  const ordered = [...steps].sort((a, b) => a.seq - b.seq);
  const cards = ordered.map((step) =>
    h(
      "section",
      {
        class: `step-card step-${step.event.kind}`,
        "data-kind": step.event.kind,
        "data-seq": String(step.seq),
        "data-item": step.event.item_id,
      },
      h(
        "header",
        { class: "step-header" },
        h("span", { class: "kind" }, step.event.kind),
        step.event.iteration !== null
          ? h("span", { class: "iteration-tag" }, ` iteration ${step.event.iteration}`)
          : null,
      ),
      renderPanel(step.event, goldens),
    ),
  );
  return h("div", { class: "timeline" }, ...cards);
}

/**
 * Steps grouped into contiguous iteration segments; loop pipelines get one
 * fold per round. Untagged steps before the first round are "setup", and
 * untagged steps after it (the final answer) are "final".
 */
export function renderIterationAccordion(steps: SeqStep[], goldens: string[] = []): VNode {
  const ordered = [...steps].sort((a, b) => a.seq - b.seq);
  const segments: { iteration: number | null; steps: SeqStep[] }[] = [];
  for (const step of ordered) {
    const last = segments[segments.length - 1];
    if (last !== undefined && last.iteration === step.event.iteration) last.steps.push(step);
    else segments.push({ iteration: step.event.iteration, steps: [step] });
  }
  const sections = segments.map((segment, index) => {
    const label =
      segment.iteration !== null
        ? `iteration ${segment.iteration}`
        : index === 0
          ? "setup"
          : "final";
    return h(
      "details",
      { class: "iteration-group", "data-label": label, open: "" },
      h("summary", {}, `${label} (${segment.steps.length} steps)`),
      renderTimeline(segment.steps, goldens),
    );
  });
  return h("div", { class: "iteration-accordion" }, ...sections);
}

function renderItem(item: ItemView, goldens: string[]): VNode {
  const hasIterations = item.steps.some((step) => step.event.iteration !== null);
  return h(
    "article",
    { class: "item-view", "data-item-id": item.itemId },
    h("h3", { class: "item-id" }, item.itemId),
    hasIterations ? renderIterationAccordion(item.steps, goldens) : renderTimeline(item.steps, goldens),
    item.error !== null ? h("div", { class: "item-error" }, item.error) : null,
    item.done && item.error === null && item.finalAnswer !== null
      ? h(
          "div",
          { class: "item-final" },
          h("span", { class: "label" }, "final answer: "),
          renderFinalAnswer(item.finalAnswer),
        )
      : null,
  );
}

export function renderProgress(view: RunView): VNode {
  const done = itemsDone(view);
  return h(
    "div",
    { class: "run-progress" },
    h("progress", { max: String(view.nItems || 1), value: String(done) }),
    h("span", { class: "progress-label" }, `${done} / ${view.nItems} items`),
  );
}

/** The whole live console for one run. */
export function renderRunView(view: RunView, goldens: string[] = []): VNode {
  return h(
    "div",
    { class: `run-view status-${view.status}`, "data-run-id": view.runId ?? "" },
    h(
      "header",
      { class: "run-header" },
      h("span", { class: "run-id" }, view.runId ?? "(not started)"),
      h("span", { class: "run-status" }, view.status),
    ),
    view.status === "running" ? renderProgress(view) : null,
    ...view.items.map((item) => renderItem(item, goldens)),
  );
}
