/**
 * Pipeline form model: built from the server-published parameter schemas.
 *
 * The form never hardcodes pipeline names or parameters — everything comes
 * from GET /pipelines, so a new topology on the server appears in the UI
 * without code changes. Client-side validation mirrors the server's rules
 * (type, bounds, known params) as a pre-check; the server stays
 * authoritative and its 400/422 details are mapped back onto fields.
 */

import type { ParamSpec, PipelineSpec } from "./types.js";

export interface FormState {
  pipeline: string;
  question: string;
  /** Raw input strings, keyed by parameter name; parsed at validation. */
  params: Record<string, string>;
}

export type FieldErrors = Record<string, string>;

/** Look up one pipeline's spec by name. */
export function pipelineSpec(specs: PipelineSpec[], name: string): PipelineSpec | undefined {
  return specs.find((spec) => spec.name === name);
}

/** A fresh form for `pipeline`, with every parameter at its default. */
export function defaultForm(specs: PipelineSpec[], pipeline: string): FormState {
  const spec = pipelineSpec(specs, pipeline);
  if (spec === undefined) throw new Error(`unknown pipeline ${JSON.stringify(pipeline)}`);
  const params: Record<string, string> = {};
  for (const [name, param] of Object.entries(spec.params)) {
    params[name] = String(param.default);
  }
  return { pipeline, question: "", params };
}

/** Switch topology, carrying over values for parameters both share. */
export function switchPipeline(form: FormState, specs: PipelineSpec[], pipeline: string): FormState {
  const next = defaultForm(specs, pipeline);
  for (const name of Object.keys(next.params)) {
    const previous = form.params[name];
    if (previous !== undefined) next.params[name] = previous;
  }
  return { ...next, question: form.question };
}

export function setQuestion(form: FormState, question: string): FormState {
  return { ...form, question };
}

export function setParam(form: FormState, name: string, raw: string): FormState {
  return { ...form, params: { ...form.params, [name]: raw } };
}

function parseParam(spec: ParamSpec, raw: string): { value?: number; error?: string } {
  const trimmed = raw.trim();
  if (trimmed === "") return { error: "required" };
  const value = Number(trimmed);
  if (!Number.isFinite(value)) return { error: "must be a number" };
  if (spec.type === "integer" && !Number.isInteger(value)) {
    return { error: "must be an integer" };
  }
  if (spec.minimum !== undefined && value < spec.minimum) {
    return { error: `must be at least ${spec.minimum}` };
  }
  if (spec.maximum !== undefined && value > spec.maximum) {
    return { error: `must be at most ${spec.maximum}` };
  }
  return { value };
}

/**
 * Validate the whole form against the published schema. Returns a map of
 * field name → message; an empty map means the form would pass the same
 * checks the server applies.
 */
export function validateForm(form: FormState, specs: PipelineSpec[]): FieldErrors {
  const errors: FieldErrors = {};
  const spec = pipelineSpec(specs, form.pipeline);
  if (spec === undefined) {
    errors["pipeline"] = `unknown pipeline ${JSON.stringify(form.pipeline)}`;
    return errors;
  }
  if (form.question.trim() === "") errors["question"] = "question must not be blank";
  for (const [name, raw] of Object.entries(form.params)) {
    const paramSpec = spec.params[name];
    if (paramSpec === undefined) {
      errors[name] = `unknown parameter for ${form.pipeline}`;
      continue;
    }
    const parsed = parseParam(paramSpec, raw);
    if (parsed.error !== undefined) errors[name] = parsed.error;
  }
  return errors;
}

/** The POST /runs body for the current form values. */
export function toRunRequest(form: FormState, specs: PipelineSpec[]): Record<string, unknown> {
  const spec = pipelineSpec(specs, form.pipeline);
  const params: Record<string, number> = {};
  for (const [name, raw] of Object.entries(form.params)) {
    const paramSpec = spec?.params[name];
    const parsed = paramSpec === undefined ? { value: Number(raw) } : parseParam(paramSpec, raw);
    if (parsed.value !== undefined) params[name] = parsed.value;
  }
  return { question: form.question, pipeline: form.pipeline, params };
}

/**
 * Map a server 400/422 detail string onto the offending field so the error
 * renders inline next to the control, not as a global banner. Falls back to
 * the "question" slot for messages that name no parameter.
 */
export function fieldErrorFromServer(form: FormState, detail: string): { field: string; message: string } {
  for (const name of Object.keys(form.params)) {
    if (detail.includes(`'${name}'`) || detail.includes(` ${name} `)) {
      return { field: name, message: detail };
    }
  }
  if (detail.includes("pipeline")) return { field: "pipeline", message: detail };
  return { field: "question", message: detail };
}
