/**
 * Wire types for the experiment service.
 *
 * These mirror the JSON the backend emits; the UI never imports backend
 * code, so this file is the single place where the HTTP contract is
 * written down on the client side.
 */

/** One pipeline parameter as published by GET /pipelines. */
export interface ParamSpec {
  type: "integer" | "number";
  default: number;
  minimum?: number;
  maximum?: number;
  description: string;
}

export interface PipelineSpec {
  name: string;
  description: string;
  params: Record<string, ParamSpec>;
}

export interface PipelinesResponse {
  pipelines: PipelineSpec[];
}

export interface SchemaResponse {
  pipelines: Record<string, { description: string; params: Record<string, ParamSpec> }>;
  generation_defaults: Record<string, unknown>;
  [key: string]: unknown;
}

export interface CorpusInfo {
  path: string;
  passages: number;
  avg_word_length: number;
}

export interface CorporaResponse {
  corpora: CorpusInfo[];
}

/** A retrieved passage as it appears in retrieve/rerank payloads. */
export interface PassageHit {
  id: string;
  title: string;
  contents: string;
  score: number;
  rank: number;
}

export interface RetrievePayload {
  query: string;
  top_k: number;
  cache_hit: boolean;
  results: PassageHit[];
}

export interface RerankPayload {
  query: string;
  results: PassageHit[];
}

export interface RefinePayload {
  method: string;
  input_words: number;
  output_words: number;
  text: string;
}

export interface ChatMessage {
  role: string;
  content: string;
}

export interface PromptPayload {
  messages: ChatMessage[];
}

/** Optional per-token detail; present only for logprob-capable runs. */
export interface TokenProb {
  token: string;
  prob: number;
}

export interface GeneratePayload {
  text: string;
  prompt_tokens: number;
  generated_tokens: number;
  purpose?: string;
  tokens?: TokenProb[];
}

export interface JudgerPayload {
  decision: string;
  evidence: unknown[];
}

export interface FinalPayload {
  answer: string;
}

export interface ErrorPayload {
  message: string;
}

export type StepKind =
  | "judger"
  | "retrieve"
  | "rerank"
  | "refine"
  | "prompt"
  | "generate"
  | "iteration"
  | "final"
  | "error";

export const STEP_KINDS: readonly StepKind[] = [
  "judger",
  "retrieve",
  "rerank",
  "refine",
  "prompt",
  "generate",
  "iteration",
  "final",
  "error",
];

/** Events on the /runs/{id}/events stream. */
export interface RunStartedEvent {
  kind: "run_started";
  run_id: string;
  n_items: number;
}

export interface StepEvent {
  kind: StepKind;
  item_id: string;
  iteration: number | null;
  payload: Record<string, unknown>;
}

export interface ItemDoneEvent {
  kind: "item_done";
  item_id: string;
  final_answer: string;
  error: string | null;
}

export interface RunDoneEvent {
  kind: "run_done";
  run_id: string;
  status: string;
  errors: number;
}

export type RunEvent = RunStartedEvent | StepEvent | ItemDoneEvent | RunDoneEvent;

export function isStepEvent(event: RunEvent): event is StepEvent {
  return (
    event.kind !== "run_started" && event.kind !== "item_done" && event.kind !== "run_done"
  );
}

/** One step of a persisted trace (GET /runs/{id}/trace, NDJSON). */
export interface TraceStep {
  kind: StepKind;
  payload: Record<string, unknown>;
  iteration?: number;
}

export interface Trace {
  item_id: string;
  question: string;
  steps: TraceStep[];
  final_answer: string;
  flags?: string[];
  error?: string;
}

/** GET /runs/{id}/report and POST /evaluate. */
export interface TokenUsage {
  totals: Record<string, number>;
  per_item: Record<string, Record<string, number>>;
}

export interface ReportError {
  item_id: string;
  error: string;
}

export interface Report {
  aggregate: Record<string, number>;
  per_item: Record<string, Record<string, number>>;
  token_usage: TokenUsage;
  errors: ReportError[];
}

export interface StartRunResponse {
  run_id: string;
  status: string;
  n_items: number;
}

export interface RunInfo {
  run_id: string;
  pipeline: string;
  status: string;
  n_items: number;
  error?: string | null;
}

export interface RunListEntry {
  run_id: string;
  pipeline: string;
  status: string;
  n_items: number;
  events: number;
}

export interface RunsResponse {
  runs: RunListEntry[];
}

export interface IndexJob {
  id: string;
  status: string;
  method?: string;
  passages?: number;
}

/** Sweep comparison summary (the runner's <base_id>_sweep.json). */
export interface SweepRow {
  value: number | string;
  run_id: string;
  aggregate: Record<string, number>;
}

export interface SweepSummary {
  axis: string;
  values: (number | string)[];
  rows: SweepRow[];
}
