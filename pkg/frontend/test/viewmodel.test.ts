import { describe, expect, it } from "vitest";

import type { ApiEvent } from "../src/types.js";
import { decodeAction, encodeAction } from "../src/types.js";
import {
  applyEvent,
  countdownMs,
  emptyViewModel,
  pendingDecisions,
  reduce,
} from "../src/viewmodel.js";

const issued = (seq: number, id: string, t = 5000): ApiEvent => ({
  seq,
  t,
  kind: "decision_issued",
  decision_id: id,
  incident_id: "inc-ev000",
  action: 7,
  window_expires_ms: t + 10_000,
});

const resolved = (seq: number, id: string, status: string, executed = 7): ApiEvent => ({
  seq,
  t: 6000,
  kind: "decision_resolved",
  decision_id: id,
  status,
  executed_action: executed,
});

describe("view model reduction", () => {
  it("tracks incident cards from updates", () => {
    const vm = reduce([
      {
        seq: 1, t: 1000, kind: "incident_update", incident_id: "inc-1",
        region: "R1", severity: 6.5, unmet: [1, 0, 2, 0], status: "confirmed",
      },
      {
        seq: 2, t: 2000, kind: "incident_update", incident_id: "inc-1",
        region: "R1", severity: 7.0, unmet: [0, 0, 2, 0], status: "confirmed",
      },
    ]);
    expect(vm.incidents.size).toBe(1);
    expect(vm.incidents.get("inc-1")!.severity).toBe(7.0);
    expect(vm.incidents.get("inc-1")!.unmet).toEqual([0, 0, 2, 0]);
    expect(vm.simTimeMs).toBe(2000);
  });

  it("moves a decision card from pending to approved", () => {
    const vm = reduce([issued(1, "dec-0001")]);
    expect(pendingDecisions(vm).map((d) => d.decisionId)).toEqual(["dec-0001"]);
    applyEvent(vm, resolved(2, "dec-0001", "Approved"));
    expect(pendingDecisions(vm)).toEqual([]);
    expect(vm.decisions.get("dec-0001")!.status).toBe("Approved");
  });

  it("marks expired windows that resolved nowhere else", () => {
    const vm = reduce([
      issued(1, "dec-0001"),
      { seq: 2, t: 15_500, kind: "window_expiry", decision_id: "dec-0001", status: "Pending" },
    ]);
    expect(vm.decisions.get("dec-0001")!.status).toBe("Expired");
  });

  it("computes countdowns against the stream clock", () => {
    const vm = reduce([issued(1, "dec-0001", 5000)]);
    vm.simTimeMs = 9000;
    expect(countdownMs(vm.decisions.get("dec-0001")!, vm)).toBe(6000);
    vm.simTimeMs = 99_000;
    expect(countdownMs(vm.decisions.get("dec-0001")!, vm)).toBe(0);
  });

  it("keeps forecast bands symmetric around the mean", () => {
    const vm = reduce([{
      seq: 1, t: 0, kind: "forecast", incident_id: "inc-1", step_s: 300,
      mean: [5, 6], variance: [0.25, 1.0],
    }]);
    const band = vm.forecasts.get("inc-1")!;
    expect(band.hi[0] - band.mean[0]).toBeCloseTo(1.645 * 0.5, 10);
    expect(band.mean[0] - band.lo[0]).toBeCloseTo(1.645 * 0.5, 10);
    expect(band.hi[1] - band.lo[1]).toBeCloseTo(2 * 1.645, 10);
  });

  it("derives state only from events (replay equals incremental)", () => {
    const events: ApiEvent[] = [
      { seq: 1, t: 1, kind: "alert", alert_id: "a1", region: "R1", predicted_class: "Flood", confidence: 0.9 },
      issued(2, "dec-0001"),
      resolved(3, "dec-0001", "Overridden", 9),
      { seq: 4, t: 9, kind: "scenario_end" },
    ];
    const incremental = emptyViewModel();
    for (const e of events) applyEvent(incremental, e);
    const replayed = reduce(events);
    expect(replayed.lastSeq).toBe(incremental.lastSeq);
    expect(replayed.connection).toBe("ended");
    expect(replayed.decisions.get("dec-0001")!.executedAction).toBe(9);
    expect([...replayed.decisions.keys()]).toEqual([...incremental.decisions.keys()]);
  });
});

describe("action codec", () => {
  it("round-trips every dispatch action", () => {
    for (let type = 0; type < 4; type++) {
      for (let slot = 0; slot < 5; slot++) {
        expect(decodeAction(encodeAction(type, slot))).toEqual({ type, slot });
      }
    }
    expect(decodeAction(0)).toBeNull();
  });
});
