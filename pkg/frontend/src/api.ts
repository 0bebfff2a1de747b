// HTTP client and server-sent-event reader for the gridwatch service.
// Uses fetch + ReadableStream so it runs both in the browser and under node.

import { EventRecord, StreamRecord } from './records.js';

export class ApiError extends Error {
  constructor(public status: number, message: string) {
    super(message);
  }
}

async function asJson(resp: Response): Promise<any> {
  const body = await resp.json().catch(() => ({}));
  if (!resp.ok) throw new ApiError(resp.status, body.error ?? `HTTP ${resp.status}`);
  return body;
}

export class ServiceClient {
  constructor(public base: string) {}

  health(): Promise<any> {
    return fetch(`${this.base}/health`).then(asJson);
  }

  config(): Promise<any> {
    return fetch(`${this.base}/config`).then(asJson);
  }

  model(): Promise<any> {
    return fetch(`${this.base}/model`).then(asJson);
  }

  events(since = 0): Promise<{ events: EventRecord[] }> {
    return fetch(`${this.base}/events?since=${since}`).then(asJson);
  }

  eventDetail(id: number): Promise<EventRecord> {
    return fetch(`${this.base}/events/${id}`).then(asJson);
  }

  setThreshold(value: number, operator: string): Promise<any> {
    return fetch(`${this.base}/threshold`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ value, operator }),
    }).then(asJson);
  }

  labelEvent(id: number, cls: string, operator: string): Promise<any> {
    return fetch(`${this.base}/events/${id}/label`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ class: cls, operator }),
    }).then(asJson);
  }

  async exportFeaturesCsv(): Promise<string> {
    const resp = await fetch(`${this.base}/export/features.csv`);
    if (!resp.ok) throw new ApiError(resp.status, `HTTP ${resp.status}`);
    return resp.text();
  }
}

/** Incremental SSE parser: feed text chunks, get (event, data) records. */
export class SseParser {
  private buffer = '';

  push(chunk: string): { event: string; data: string }[] {
    this.buffer += chunk;
    const out: { event: string; data: string }[] = [];
    let idx: number;
    while ((idx = this.buffer.indexOf('\n\n')) >= 0) {
      const block = this.buffer.slice(0, idx);
      this.buffer = this.buffer.slice(idx + 2);
      let event = 'message';
      const data: string[] = [];
      for (const line of block.split('\n')) {
        if (line.startsWith('event: ')) event = line.slice(7);
        else if (line.startsWith('data: ')) data.push(line.slice(6));
      }
      if (data.length > 0) out.push({ event, data: data.join('\n') });
    }
    return out;
  }
}

export interface StreamHandle {
  stop(): void;
}

/** Connect to /stream and deliver parsed records in order; reconnects with
 * backoff until stopped, reporting connection state transitions. */
export function openStream(
  base: string,
  onRecord: (record: StreamRecord) => void,
  onStatus: (connected: boolean) => void,
  reconnectDelayMs = 1000,
): StreamHandle {
  let stopped = false;
  let controller: AbortController | null = null;

  async function connectLoop() {
    while (!stopped) {
      controller = new AbortController();
      try {
        const resp = await fetch(`${base}/stream`, { signal: controller.signal });
        if (!resp.ok || resp.body === null) throw new Error(`stream HTTP ${resp.status}`);
        onStatus(true);
        const reader = resp.body.getReader();
        const decoder = new TextDecoder();
        const parser = new SseParser();
        for (;;) {
          const { done, value } = await reader.read();
          if (done) break;
          for (const { data } of parser.push(decoder.decode(value, { stream: true }))) {
            const record = JSON.parse(data) as StreamRecord;
            onRecord(record);
            if (record.type === 'end') {
              stopped = true;
            }
          }
          if (stopped) break;
        }
      } catch (err) {
        if (stopped) break;
      }
      onStatus(false);
      if (stopped) break;
      await new Promise((resolve) => setTimeout(resolve, reconnectDelayMs));
    }
  }

  void connectLoop();
  return {
    stop() {
      stopped = true;
      controller?.abort();
    },
  };
}
