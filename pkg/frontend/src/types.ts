/** Wire types for the gateway API (documented in the repo README). */

export type Verdict = "Approve" | "Override" | "Modify";

/** Projection event pushed on /stream; seq is strictly increasing from 1. */
export interface ApiEvent {
  seq: number;
  t: number; // sim milliseconds
  kind:
    | "alert"
    | "incident_update"
    | "decision_issued"
    | "decision_resolved"
    | "dispatch_arrival"
    | "window_expiry"
    | "forecast"
    | "scenario_end";
  [key: string]: unknown;
}

export interface DirectiveResult {
  accepted: boolean;
  reason: string;
}

export interface StateSnapshot {
  seq: number;
  sim_time_ms: number;
  scenario_done: boolean;
  incidents: Array<{
    incident_id: string;
    region: string;
    severity: number;
    unmet: number[];
    status: string;
  }>;
  pending_decisions: Array<{
    decision_id: string;
    incident_id: string;
    action: number;
    window_expires_ms: number;
  }>;
  decisions: Array<Record<string, unknown>>;
  alerts: Array<Record<string, unknown>>;
}

export const N_SLOTS = 5;

/** Discrete dispatch actions: 0 is the no-op; k >= 1 encodes (type, slot). */
export function decodeAction(action: number): { type: number; slot: number } | null {
  if (action === 0) return null;
  const k = action - 1;
  return { type: Math.floor(k / N_SLOTS), slot: k % N_SLOTS };
}

export function encodeAction(type: number, slot: number): number {
  return 1 + type * N_SLOTS + slot;
}
