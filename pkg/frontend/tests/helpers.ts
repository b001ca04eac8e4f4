/** Shared test utilities: fixture loading and a stub fetch. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const FIXTURES = join(dirname(fileURLToPath(import.meta.url)), "fixtures");

export function readFixture(name: string): string {
  return readFileSync(join(FIXTURES, name), "utf-8");
}

export function readJsonFixture<T>(name: string): T {
  return JSON.parse(readFixture(name)) as T;
}

export interface RecordedCall {
  url: string;
  init?: RequestInit;
}

/**
 * A fetch stub that answers from a route table and records every call.
 * Routes map "METHOD path" → handler returning status/body.
 */
export function stubFetch(
  routes: Record<string, (init?: RequestInit) => { status?: number; body: string; headers?: Record<string, string> }>,
): { fetchImpl: typeof fetch; calls: RecordedCall[] } {
  const calls: RecordedCall[] = [];
  const fetchImpl = (async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    calls.push({ url, init });
    const method = init?.method ?? "GET";
    const path = url.replace(/^https?:\/\/[^/]+/, "");
    const handler = routes[`${method} ${path}`];
    if (handler === undefined) {
      return new Response(JSON.stringify({ detail: `no stub for ${method} ${path}` }), { status: 404 });
    }
    const result = handler(init);
    return new Response(result.body, {
      status: result.status ?? 200,
      headers: result.headers ?? { "Content-Type": "application/json" },
    });
  }) as typeof fetch;
  return { fetchImpl, calls };
}

/** Split text into chunks of `size` characters, to stress stream parsing. */
export function chunked(text: string, size: number): string[] {
  const chunks: string[] = [];
  for (let at = 0; at < text.length; at += size) {
    chunks.push(text.slice(at, at + size));
  }
  return chunks;
}

/** Build a ReadableStream of UTF-8 bytes from text chunks. */
export function byteStream(chunks: string[]): ReadableStream<Uint8Array> {
  const encoder = new TextEncoder();
  let index = 0;
  return new ReadableStream({
    pull(controller) {
      if (index >= chunks.length) {
        controller.close();
        return;
      }
      controller.enqueue(encoder.encode(chunks[index]));
      index += 1;
    },
  });
}
