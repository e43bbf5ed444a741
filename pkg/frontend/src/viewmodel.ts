/** Console view model: a pure fold over the gateway's projection events.
 *
 * Nothing here mutates mission state; every change the operator sees entered
 * through an ApiEvent, and every change the operator makes leaves through
 * POST /override. Countdowns derive from the decision's expiry time and the
 * latest sim clock carried by the stream.
 */

import type { ApiEvent } from "./types.js";

export interface IncidentCard {
  incidentId: string;
  region: string;
  severity: number;
  unmet: number[];
  status: string;
  updatedT: number;
}

export type DecisionStatus =
  | "Pending"
  | "Approved"
  | "Overridden"
  | "Modified"
  | "AutoApproved"
  | "Expired";

export interface DecisionCard {
  decisionId: string;
  incidentId: string;
  action: number;
  status: DecisionStatus;
  executedAction?: number;
  windowExpiresMs: number;
  issuedT: number;
}

export interface ForecastBand {
  incidentId: string;
  stepS: number;
  mean: number[];
  lo: number[];
  hi: number[];
}

export interface DirectiveSendState {
  decisionId: string;
  state: "sending" | "acked" | "rejected";
  reason?: string;
}

export interface ConsoleViewModel {
  connection: "connecting" | "live" | "reconnecting" | "ended";
  lastSeq: number;
  simTimeMs: number;
  incidents: Map<string, IncidentCard>;
  decisions: Map<string, DecisionCard>;
  alerts: Array<{ alertId: string; region: string; cls: string; confidence: number }>;
  forecasts: Map<string, ForecastBand>;
  directives: Map<string, DirectiveSendState>;
}

export function emptyViewModel(): ConsoleViewModel {
  return {
    connection: "connecting",
    lastSeq: 0,
    simTimeMs: 0,
    incidents: new Map(),
    decisions: new Map(),
    alerts: [],
    forecasts: new Map(),
    directives: new Map(),
  };
}

const Z90 = 1.645;

export function applyEvent(vm: ConsoleViewModel, e: ApiEvent): ConsoleViewModel {
  vm.lastSeq = Math.max(vm.lastSeq, e.seq);
  vm.simTimeMs = Math.max(vm.simTimeMs, e.t ?? 0);
  switch (e.kind) {
    case "alert":
      vm.alerts.push({
        alertId: e.alert_id as string,
        region: e.region as string,
        cls: e.predicted_class as string,
        confidence: e.confidence as number,
      });
      break;
    case "incident_update":
      vm.incidents.set(e.incident_id as string, {
        incidentId: e.incident_id as string,
        region: e.region as string,
        severity: e.severity as number,
        unmet: e.unmet as number[],
        status: e.status as string,
        updatedT: e.t,
      });
      break;
    case "decision_issued":
      vm.decisions.set(e.decision_id as string, {
        decisionId: e.decision_id as string,
        incidentId: e.incident_id as string,
        action: e.action as number,
        status: "Pending",
        windowExpiresMs: e.window_expires_ms as number,
        issuedT: e.t,
      });
      break;
    case "decision_resolved": {
      const d = vm.decisions.get(e.decision_id as string);
      if (d) {
        d.status = e.status as DecisionStatus;
        d.executedAction = e.executed_action as number;
      }
      break;
    }
    case "window_expiry": {
      const d = vm.decisions.get(e.decision_id as string);
      if (d && d.status === "Pending") d.status = "Expired";
      break;
    }
    case "forecast": {
      const mean = e.mean as number[];
      const variance = e.variance as number[];
      vm.forecasts.set(e.incident_id as string, {
        incidentId: e.incident_id as string,
        stepS: e.step_s as number,
        mean,
        lo: mean.map((m, i) => m - Z90 * Math.sqrt(variance[i])),
        hi: mean.map((m, i) => m + Z90 * Math.sqrt(variance[i])),
      });
      break;
    }
    case "scenario_end":
      vm.connection = "ended";
      break;
    case "dispatch_arrival":
      break;
  }
  return vm;
}

export function reduce(events: ApiEvent[], vm = emptyViewModel()): ConsoleViewModel {
  for (const e of events) applyEvent(vm, e);
  return vm;
}

export function pendingDecisions(vm: ConsoleViewModel): DecisionCard[] {
  return [...vm.decisions.values()]
    .filter((d) => d.status === "Pending")
    .sort((a, b) => a.decisionId.localeCompare(b.decisionId));
}

/** Milliseconds of override window remaining at the current sim clock. */
export function countdownMs(d: DecisionCard, vm: ConsoleViewModel): number {
  return Math.max(0, d.windowExpiresMs - vm.simTimeMs);
}
