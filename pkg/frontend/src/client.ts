/** Gateway client: state fetches, directive posts, resumable SSE stream.
 *
 * The stream is parsed from fetch body chunks (works in browsers and node
 * without an EventSource polyfill). Reconnection resumes from the last seen
 * sequence number, and the server replays from exactly that point, so a
 * dropped connection never loses or duplicates events.
 */

import type { ApiEvent, DirectiveResult, StateSnapshot, Verdict } from "./types.js";

export interface StreamHandle {
  /** resolves when the stream ends (scenario end) or is aborted */
  done: Promise<void>;
  abort: () => void;
}

export class GatewayClient {
  constructor(readonly baseUrl: string) {}

  async getState(): Promise<StateSnapshot> {
    const res = await fetch(`${this.baseUrl}/state`);
    if (!res.ok) throw new Error(`state failed: ${res.status}`);
    return (await res.json()) as StateSnapshot;
  }

  async sendDirective(
    decisionId: string,
    verdict: Verdict,
    replacement?: number,
    author = "console",
  ): Promise<DirectiveResult> {
    const res = await fetch(`${this.baseUrl}/override`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({
        decision_id: decisionId,
        verdict,
        replacement: replacement ?? null,
        author,
      }),
    });
    const body = (await res.json()) as DirectiveResult & { error?: string };
    if (!res.ok && body.error) throw new Error(`${res.status}: ${body.error}`);
    return body;
  }

  /**
   * Subscribe from `fromSeq` (exclusive); events arrive in order. Network
   * drops are retried with resume; a server "end" frame stops the loop.
   */
  stream(
    fromSeq: number,
    onEvent: (e: ApiEvent) => void,
    opts: { onReconnect?: () => void; retryMs?: number } = {},
  ): StreamHandle {
    const controller = new AbortController();
    let lastSeq = fromSeq;
    const retryMs = opts.retryMs ?? 250;

    const done = (async () => {
      let first = true;
      while (!controller.signal.aborted) {
        if (!first) opts.onReconnect?.();
        first = false;
        try {
          const res = await fetch(`${this.baseUrl}/stream?from_seq=${lastSeq}`, {
            signal: controller.signal,
          });
          if (!res.ok || !res.body) throw new Error(`stream: ${res.status}`);
          const ended = await this.consume(res.body, (frame) => {
            if (frame.event === "end") return true;
            if (frame.data) {
              const event = JSON.parse(frame.data) as ApiEvent;
              if (event.seq > lastSeq) {
                lastSeq = event.seq;
                onEvent(event);
              }
            }
            return false;
          });
          if (ended) return;
        } catch (err) {
          if (controller.signal.aborted) return;
        }
        await new Promise((r) => setTimeout(r, retryMs));
      }
    })();

    return { done, abort: () => controller.abort() };
  }

  private async consume(
    body: ReadableStream<Uint8Array>,
    onFrame: (f: { event?: string; data?: string }) => boolean,
  ): Promise<boolean> {
    const reader = body.getReader();
    const decoder = new TextDecoder();
    let buf = "";
    for (;;) {
      const { value, done } = await reader.read();
      if (done) return false;
      buf += decoder.decode(value, { stream: true });
      let idx: number;
      while ((idx = buf.indexOf("\n\n")) >= 0) {
        const raw = buf.slice(0, idx);
        buf = buf.slice(idx + 2);
        const frame: { event?: string; data?: string } = {};
        for (const line of raw.split("\n")) {
          if (line.startsWith("event: ")) frame.event = line.slice(7);
          else if (line.startsWith("data: ")) frame.data = line.slice(6);
        }
        if (onFrame(frame)) {
          reader.cancel().catch(() => undefined);
          return true;
        }
      }
    }
  }
}
