// REST client plus the SSE subscription with exponential-backoff reconnect.
// Built on fetch streaming so the same code runs in the browser and in the
// node test harness.

import type {
  ApiError,
  EventPayload,
  LabelDraft,
  PdpSnapshot,
  RunMark,
  ScoredRecord,
} from "./types.js";

export type ApiResult<T> = { ok: true; value: T } | { ok: false; error: ApiError };

async function asError(resp: Response): Promise<ApiError> {
  try {
    const body = (await resp.json()) as ApiError;
    if (body && typeof body.message === "string") return body;
  } catch {
    // fall through to the generic shape
  }
  return { status: resp.status, code: "http_error", message: resp.statusText };
}

export class Api {
  constructor(readonly base: string = "") {}

  private url(path: string): string {
    return this.base + path;
  }

  private async request<T>(
    path: string,
    init?: RequestInit,
    parse: (r: Response) => Promise<T> = (r) => r.json() as Promise<T>,
  ): Promise<ApiResult<T>> {
    const resp = await fetch(this.url(path), init);
    if (!resp.ok) return { ok: false, error: await asError(resp) };
    return { ok: true, value: await parse(resp) };
  }

  private jsonInit(method: string, body: unknown): RequestInit {
    return {
      method,
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    };
  }

  health() {
    return this.request<{ status: string; version: string }>("/health");
  }

  snapshot(lastN = 500) {
    return this.request<{
      threshold: number;
      features: { name: string; enabled: boolean }[];
      records: ScoredRecord[];
      events: EventPayload[];
      run_marks: RunMark[];
    }>(`/snapshot?last_n=${lastN}`);
  }

  putThreshold(value: number) {
    return this.request<null>(
      "/threshold",
      this.jsonInit("PUT", { value }),
      async () => null,
    );
  }

  getThreshold() {
    return this.request<{ value: number }>("/threshold");
  }

  putFeature(name: string, enabled: boolean) {
    return this.request<null>(
      `/features/${encodeURIComponent(name)}`,
      this.jsonInit("PUT", { enabled }),
      async () => null,
    );
  }

  getPdp(feature: string) {
    return this.request<PdpSnapshot>(`/pdp/${encodeURIComponent(feature)}`);
  }

  getEvents() {
    return this.request<{ events: EventPayload[] }>("/events");
  }

  postLabel(draft: LabelDraft) {
    return this.request<{ label: LabelDraft }>("/labels", this.jsonInit("POST", draft));
  }

  /** Suggested threshold, or null while there are not enough labels (409). */
  async suggestion(): Promise<number | null> {
    const result = await this.request<{ value: number }>("/threshold/suggestion");
    return result.ok ? result.value.value : null;
  }

  postMark(note: string) {
    return this.request<{ mark: RunMark }>("/runs/mark", this.jsonInit("POST", { note }));
  }

  startIngest(spec: unknown) {
    return this.request<{ status: string }>("/ingest/start", this.jsonInit("POST", spec));
  }
}

// -- server-sent events ------------------------------------------------------------

export interface StreamHandlers {
  onRecord?(record: ScoredRecord): void;
  onEvent?(event: EventPayload): void;
  onMark?(mark: RunMark): void;
  onStatus?(status: "connecting" | "open" | "retrying" | "closed"): void;
}

export interface SseMessage {
  kind: string;
  data: string;
}

/**
 * Incremental parser for an SSE byte stream; feed it decoded chunks and it
 * emits one message per data line, tagged with the preceding event name.
 */
export function createSseParser(emit: (msg: SseMessage) => void): (chunk: string) => void {
  let buffer = "";
  let kind = "message";
  return (chunk: string) => {
    buffer += chunk;
    let nl: number;
    while ((nl = buffer.indexOf("\n")) >= 0) {
      const line = buffer.slice(0, nl).replace(/\r$/, "");
      buffer = buffer.slice(nl + 1);
      if (line.startsWith("event:")) {
        kind = line.slice(6).trim();
      } else if (line.startsWith("data:")) {
        emit({ kind, data: line.slice(5).trim() });
      } else if (line === "") {
        kind = "message";
      }
      // comment lines (keepalives) are ignored
    }
  };
}

export interface StreamConnection {
  close(): void;
}

export function connectStream(
  url: string,
  handlers: StreamHandlers,
  opts: { baseDelayMs?: number; maxDelayMs?: number } = {},
): StreamConnection {
  const baseDelay = opts.baseDelayMs ?? 500;
  const maxDelay = opts.maxDelayMs ?? 15_000;
  let closed = false;
  let attempt = 0;
  let controller: AbortController | null = null;

  const dispatch = (msg: SseMessage) => {
    attempt = 0; // a live message proves the connection is healthy
    try {
      const payload = JSON.parse(msg.data);
      if (msg.kind === "record") handlers.onRecord?.(payload);
      else if (msg.kind === "event") handlers.onEvent?.(payload);
      else if (msg.kind === "mark") handlers.onMark?.(payload);
    } catch {
      // tolerate malformed frames; the stream stays up
    }
  };

  const run = async () => {
    while (!closed) {
      handlers.onStatus?.(attempt === 0 ? "connecting" : "retrying");
      controller = new AbortController();
      try {
        const resp = await fetch(url, {
          signal: controller.signal,
          headers: { accept: "text/event-stream" },
        });
        if (resp.ok && resp.body) {
          handlers.onStatus?.("open");
          const parser = createSseParser(dispatch);
          const reader = resp.body.getReader();
          const decoder = new TextDecoder();
          for (;;) {
            const { done, value } = await reader.read();
            if (done) break;
            parser(decoder.decode(value, { stream: true }));
          }
        }
      } catch {
        // fall through to the backoff
      }
      if (closed) break;
      const delay = Math.min(maxDelay, baseDelay * 2 ** attempt);
      attempt += 1;
      await new Promise((resolve) => setTimeout(resolve, delay));
    }
    handlers.onStatus?.("closed");
  };

  void run();
  return {
    close() {
      closed = true;
      controller?.abort();
    },
  };
}
