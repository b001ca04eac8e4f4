/**
 * Server-sent events: incremental parsing plus a reconnecting subscription.
 *
 * The browser's EventSource cannot set a custom starting position after a
 * manual reconnect and is awkward to drive in tests, so the stream is read
 * with fetch + ReadableStream and parsed here. The parser is a plain state
 * machine over text chunks; the subscription layer adds resume-on-drop via
 * the Last-Event-ID header so a reconnect never re-delivers or skips events.
 */

export interface SseMessage {
  /** Last seen `id:` field, if any. */
  id: string | null;
  /** All `data:` lines of the event, joined with newlines. */
  data: string;
}

/**
 * Incremental SSE parser. Feed it arbitrary text chunks; it emits complete
 * events as they close (blank line) and buffers partial ones across feeds.
 */
export class SseParser {
  private buffer = "";
  private dataLines: string[] = [];
  private eventId: string | null = null;

  feed(chunk: string): SseMessage[] {
    this.buffer += chunk;
    const events: SseMessage[] = [];
    for (;;) {
      const newline = this.buffer.indexOf("\n");
      if (newline < 0) break;
      let line = this.buffer.slice(0, newline);
      this.buffer = this.buffer.slice(newline + 1);
      if (line.endsWith("\r")) line = line.slice(0, -1);
      const event = this.consumeLine(line);
      if (event !== null) events.push(event);
    }
    return events;
  }

  /** Flush a final event that was not followed by a blank line. */
  end(): SseMessage[] {
    const events = this.feed("\n\n");
    this.buffer = "";
    return events;
  }

  private consumeLine(line: string): SseMessage | null {
    if (line === "") {
      if (this.dataLines.length === 0) {
        this.eventId = null;
        return null; // stray blank line, nothing accumulated
      }
      const event = { id: this.eventId, data: this.dataLines.join("\n") };
      this.dataLines = [];
      this.eventId = null;
      return event;
    }
    if (line.startsWith(":")) return null; // comment / keep-alive
    const colon = line.indexOf(":");
    const field = colon < 0 ? line : line.slice(0, colon);
    let value = colon < 0 ? "" : line.slice(colon + 1);
    if (value.startsWith(" ")) value = value.slice(1);
    if (field === "data") this.dataLines.push(value);
    else if (field === "id") this.eventId = value;
    // "event" and "retry" fields are not used by the backend.
    return null;
  }
}

/** Parse a complete SSE document in one call. */
export function parseSse(text: string): SseMessage[] {
  const parser = new SseParser();
  return [...parser.feed(text), ...parser.end()];
}

export interface SubscribeOptions {
  /** Resume after this event id (numeric ids on the wire). */
  lastEventId?: string;
  /** Injectable for tests; defaults to the global fetch. */
  fetchImpl?: typeof fetch;
  /** Reconnect attempts after a mid-stream drop. */
  maxRetries?: number;
  /** Delay between reconnect attempts, in ms. */
  retryDelayMs?: number;
  signal?: AbortSignal;
}

/**
 * Stream events from `url`, invoking `onEvent` per event, until the stream
 * closes cleanly. Mid-stream drops reconnect with the Last-Event-ID header
 * set to the last delivered id, so the caller sees each event exactly once.
 */
export async function subscribe(
  url: string,
  onEvent: (event: SseMessage) => void,
  options: SubscribeOptions = {},
): Promise<void> {
  const fetchImpl = options.fetchImpl ?? fetch;
  const maxRetries = options.maxRetries ?? 5;
  const retryDelayMs = options.retryDelayMs ?? 500;
  let lastEventId = options.lastEventId ?? null;
  let attempt = 0;

  for (;;) {
    const headers: Record<string, string> = { Accept: "text/event-stream" };
    if (lastEventId !== null) headers["Last-Event-ID"] = lastEventId;
    try {
      const response = await fetchImpl(url, { headers, signal: options.signal });
      if (!response.ok) {
        throw new Error(`event stream request failed: ${response.status}`);
      }
      const body = response.body;
      if (body === null) throw new Error("event stream response has no body");
      const reader = body.getReader();
      const decoder = new TextDecoder();
      const parser = new SseParser();
      const deliver = (event: SseMessage) => {
        if (event.id !== null) lastEventId = event.id;
        onEvent(event);
      };
      for (;;) {
        const { done, value } = await reader.read();
        if (done) break;
        attempt = 0; // receiving data resets the retry budget
        for (const event of parser.feed(decoder.decode(value, { stream: true }))) {
          deliver(event);
        }
      }
      for (const event of parser.end()) deliver(event);
      return; // clean close
    } catch (error) {
      if (options.signal?.aborted) return;
      attempt += 1;
      if (attempt > maxRetries) throw error;
      await new Promise((resolve) => setTimeout(resolve, retryDelayMs));
    }
  }
}
