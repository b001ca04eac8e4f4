/**
 * Browser entry point: wires the form, the live run console, and the
 * dashboard together against a running experiment service.
 *
 * Everything stateful lives in the pure modules (form.ts, state.ts); this
 * file only moves data between the DOM and those modules, so it stays thin.
 * The service base URL comes from the `?api=` query parameter and defaults
 * to the local dev service.
 */

import { ApiClient, ApiError } from "./api.js";
import { subscribe } from "./sse.js";
import {
  applyEvent,
  initialRunView,
  type RunView,
} from "./state.js";
import {
  defaultForm,
  fieldErrorFromServer,
  setParam,
  setQuestion,
  switchPipeline,
  toRunRequest,
  validateForm,
  type FormState,
} from "./form.js";
import { h, renderRunView, type VNode } from "./render.js";
import { renderDashboard, renderSweepChart } from "./dashboard.js";
import { mount, update } from "./dom.js";
import type { PipelineSpec, SweepSummary } from "./types.js";

interface AppState {
  specs: PipelineSpec[];
  form: FormState;
  goldens: string[];
  view: RunView;
  fieldErrors: Record<string, string>;
  report: VNode | null;
}

function el(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node;
}

function renderForm(state: AppState): VNode {
  const spec = state.specs.find((candidate) => candidate.name === state.form.pipeline);
  const options = state.specs.map((candidate) =>
    h(
      "option",
      candidate.name === state.form.pipeline
        ? { value: candidate.name, selected: "" }
        : { value: candidate.name },
      candidate.name,
    ),
  );
  const paramFields = Object.entries(spec?.params ?? {}).map(([name, paramSpec]) => {
    const error = state.fieldErrors[name];
    return h(
      "label",
      { class: "param-field", "data-param": name },
      h("span", { class: "param-name", title: paramSpec.description }, name),
      h("input", {
        class: "param-input",
        "data-param": name,
        value: state.form.params[name] ?? "",
        inputmode: "numeric",
      }),
      error !== undefined ? h("span", { class: "field-error" }, error) : null,
    );
  });
  return h(
    "form",
    { class: "pipeline-form", id: "pipeline-form" },
    h(
      "label",
      { class: "pipeline-field" },
      h("span", {}, "pipeline"),
      h("select", { id: "pipeline-select" }, ...options),
      state.fieldErrors["pipeline"] !== undefined
        ? h("span", { class: "field-error" }, state.fieldErrors["pipeline"])
        : null,
    ),
    h("p", { class: "pipeline-description" }, spec?.description ?? ""),
    h(
      "label",
      { class: "question-field" },
      h("span", {}, "question"),
      h("input", { id: "question-input", value: state.form.question, placeholder: "ask something…" }),
      state.fieldErrors["question"] !== undefined
        ? h("span", { class: "field-error" }, state.fieldErrors["question"])
        : null,
    ),
    h(
      "label",
      { class: "goldens-field" },
      h("span", { title: "comma-separated; used to highlight passages client-side" }, "expected answers"),
      h("input", { id: "goldens-input", value: state.goldens.join(", ") }),
    ),
    h("div", { class: "params" }, ...paramFields),
    h(
      "div",
      { class: "actions" },
      h("button", { type: "submit", id: "run-button" }, state.view.status === "idle" ? "run" : "re-run"),
    ),
  );
}

async function main(): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const api = new ApiClient(params.get("api") ?? "http://127.0.0.1:8000");

  const { pipelines } = await api.pipelines();
  const { corpora } = await api.corpora();
  const state: AppState = {
    specs: pipelines,
    form: defaultForm(pipelines, pipelines[0]?.name ?? "sequential"),
    goldens: [],
    view: initialRunView(),
    fieldErrors: {},
    report: null,
  };

  el("corpus-info").textContent = corpora
    .map((corpus) => `${corpus.path} — ${corpus.passages} passages`)
    .join("; ");

  const redraw = (): void => {
    update(el("form-root"), renderForm(state));
    bindForm();
    update(el("run-root"), renderRunView(state.view, state.goldens));
    const reportRoot = el("report-root");
    reportRoot.replaceChildren();
    if (state.report !== null) reportRoot.appendChild(mount(state.report));
  };

  const bindForm = (): void => {
    const form = el("pipeline-form") as HTMLFormElement;
    const select = el("pipeline-select") as HTMLSelectElement;
    select.addEventListener("change", () => {
      state.form = switchPipeline(state.form, state.specs, select.value);
      state.fieldErrors = {};
      redraw();
    });
    (el("question-input") as HTMLInputElement).addEventListener("input", (event) => {
      state.form = setQuestion(state.form, (event.target as HTMLInputElement).value);
    });
    (el("goldens-input") as HTMLInputElement).addEventListener("input", (event) => {
      state.goldens = (event.target as HTMLInputElement).value
        .split(",")
        .map((golden) => golden.trim())
        .filter((golden) => golden !== "");
    });
    for (const input of form.querySelectorAll<HTMLInputElement>("input.param-input")) {
      input.addEventListener("input", () => {
        const name = input.dataset["param"];
        if (name !== undefined) state.form = setParam(state.form, name, input.value);
      });
    }
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      void startRun();
    });
  };

  const startRun = async (): Promise<void> => {
    state.fieldErrors = validateForm(state.form, state.specs);
    if (Object.keys(state.fieldErrors).length > 0) {
      redraw();
      return;
    }
    state.report = null;
    state.view = initialRunView();
    try {
      const started = await api.startRun(toRunRequest(state.form, state.specs));
      redraw();
      await subscribe(api.eventsUrl(started.run_id), (message) => {
        state.view = applyEvent(state.view, message);
        redraw();
      });
      await showReport(started.run_id);
    } catch (error) {
      if (error instanceof ApiError && (error.status === 400 || error.status === 422)) {
        const mapped = fieldErrorFromServer(state.form, error.detail);
        state.fieldErrors = { [mapped.field]: mapped.message };
      } else {
        state.fieldErrors = { question: String(error) };
      }
      redraw();
    }
  };

  const showReport = async (runId: string): Promise<void> => {
    try {
      const report = await api.report(runId);
      state.report = renderDashboard(report);
    } catch (error) {
      // Ad-hoc questions have no golden answers to score against (404).
      if (!(error instanceof ApiError && error.status === 404)) throw error;
      state.report = null;
    }
    redraw();
  };

  (el("sweep-input") as HTMLInputElement).addEventListener("change", async (event) => {
    const file = (event.target as HTMLInputElement).files?.[0];
    if (file === undefined) return;
    const summary = JSON.parse(await file.text()) as SweepSummary;
    state.report = renderSweepChart(summary);
    redraw();
  });

  redraw();
}

main().catch((error) => {
  const banner = document.getElementById("corpus-info");
  if (banner !== null) banner.textContent = `failed to reach the service: ${error}`;
});
