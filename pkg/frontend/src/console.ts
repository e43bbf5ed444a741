/** Live console session: stream -> view model -> render callback, plus
 * directive sending serialized per decision so one decision can never carry
 * two conflicting verdicts in flight.
 */

import { GatewayClient, StreamHandle } from "./client.js";
import type { DirectiveResult, Verdict } from "./types.js";
import {
  applyEvent,
  ConsoleViewModel,
  emptyViewModel,
} from "./viewmodel.js";

export class ConsoleSession {
  readonly vm: ConsoleViewModel = emptyViewModel();
  private stream: StreamHandle | null = null;
  private inflight = new Map<string, Promise<DirectiveResult>>();

  constructor(
    readonly client: GatewayClient,
    private readonly onUpdate: (vm: ConsoleViewModel) => void = () => undefined,
  ) {}

  /** Connect and follow the event stream from the beginning. */
  connect(): StreamHandle {
    this.vm.connection = "connecting";
    this.stream = this.client.stream(
      0,
      (e) => {
        if (this.vm.connection !== "ended") this.vm.connection = "live";
        applyEvent(this.vm, e);
        this.onUpdate(this.vm);
      },
      {
        onReconnect: () => {
          if (this.vm.connection !== "ended") {
            this.vm.connection = "reconnecting";
            this.onUpdate(this.vm);
          }
        },
      },
    );
    return this.stream;
  }

  disconnect(): void {
    this.stream?.abort();
    this.stream = null;
  }

  /** Send a verdict; concurrent sends for the same decision coalesce. */
  sendDirective(
    decisionId: string,
    verdict: Verdict,
    replacement?: number,
  ): Promise<DirectiveResult> {
    const existing = this.inflight.get(decisionId);
    if (existing) return existing;
    this.vm.directives.set(decisionId, { decisionId, state: "sending" });
    this.onUpdate(this.vm);
    const p = this.client
      .sendDirective(decisionId, verdict, replacement)
      .then((result) => {
        this.vm.directives.set(decisionId, {
          decisionId,
          state: result.accepted ? "acked" : "rejected",
          reason: result.accepted ? undefined : result.reason,
        });
        this.onUpdate(this.vm);
        return result;
      })
      .finally(() => this.inflight.delete(decisionId));
    this.inflight.set(decisionId, p);
    return p;
  }
}
