// NDJSON event stream consumer: held-open GET /events, resumable by seq.
// On transport loss it backs off, reports the disconnect, and reconnects
// from the cursor so no event is missed or duplicated.

import type { ServiceEvent } from './types.js';
import type { FetchLike } from './api.js';

export interface EventStreamOptions {
  baseUrl: string;
  token: string;
  since?: number;
  onEvent: (event: ServiceEvent) => void;
  onStateChange?: (state: 'connected' | 'disconnected', attempt: number) => void;
  fetchImpl?: FetchLike;
  /** Backoff schedule in ms; the last entry repeats. */
  backoffMs?: number[];
}

export class EventStream {
  cursor: number;
  private stopped = false;
  private controller: AbortController | null = null;

  constructor(private options: EventStreamOptions) {
    this.cursor = options.since ?? 0;
  }

  stop(): void {
    this.stopped = true;
    this.controller?.abort();
  }

  /** Runs until stop(); resolves once stopped. */
  async run(): Promise<void> {
    const backoff = this.options.backoffMs ?? [250, 500, 1000, 2000, 5000];
    let attempt = 0;
    while (!this.stopped) {
      try {
        await this.consumeOnce();
        attempt = 0;
      } catch (err) {
        if (this.stopped) break;
        this.options.onStateChange?.('disconnected', attempt + 1);
        const wait = backoff[Math.min(attempt, backoff.length - 1)];
        attempt += 1;
        await new Promise((resolve) => setTimeout(resolve, wait));
      }
    }
  }

  private async consumeOnce(): Promise<void> {
    const fetchImpl = this.options.fetchImpl ?? ((input: string, init?: RequestInit) => fetch(input, init));
    this.controller = new AbortController();
    const response = await fetchImpl(
      `${this.options.baseUrl}/events?since=${this.cursor}`,
      {
        headers: { Authorization: `Bearer ${this.options.token}` },
        signal: this.controller.signal,
      },
    );
    if (!response.ok || !response.body) {
      throw new Error(`event stream HTTP ${response.status}`);
    }
    this.options.onStateChange?.('connected', 0);
    const reader = response.body.getReader();
    const decoder = new TextDecoder();
    let buffer = '';
    for (;;) {
      const { done, value } = await reader.read();
      if (done) {
        if (!this.stopped) throw new Error('event stream ended');
        return;
      }
      buffer += decoder.decode(value, { stream: true });
      let newline = buffer.indexOf('\n');
      while (newline >= 0) {
        const line = buffer.slice(0, newline).trim();
        buffer = buffer.slice(newline + 1);
        if (line) {
          const event = JSON.parse(line) as ServiceEvent;
          if (event.seq > this.cursor) {
            this.cursor = event.seq;
            this.options.onEvent(event);
          }
        }
        newline = buffer.indexOf('\n');
      }
      if (this.stopped) return;
    }
  }
}
