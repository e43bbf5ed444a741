"""Deterministic discrete-event orchestrator for one scenario run.

The engine owns a single event loop ordered by (time, kind priority,
sequence). Sensor readings travel edge -> central through the network model,
land on the bus, and feed the perception path: the agentic pipeline
classifies reading text and alerts on confident hazards, while the rule-based
pipeline alerts after a fixed number of corroborating high-severity readings
and labels the incident from a static channel table. Confirmed incidents
occupy allocation slots (overflow queues by severity), decision ticks run the
configured allocation policy, and approved dispatches travel back
central -> edge before units arrive on scene.

In batch mode decisions auto-approve the moment they are issued. In
interactive mode each decision opens an override window; directives arriving
through the command queue are applied between events, stamped with sim time,
and recorded to a transcript, so replaying (pack, config, seed, transcript)
reproduces the run exactly. Everything the metrics layer needs is written to
the event log; no metric reads live engine state.
"""

from __future__ import annotations

import heapq
import json
import queue
import time as wallclock
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import alloc, metrics as metrics_mod
from .alloc import (AllocWorld, IncidentSlot, ResourcePool, baseline_policy,
                    decode_action, encode_state, N_SLOTS, N_TYPES, NOOP_ACTION)
from .assess import TextClassifier, maybe_alert
from .bus import MessageBroker
from .kgraph import KnowledgeGraph, NodeKind
from .netsim import MISSION_SLICE, NetConfig, NetworkSim, Topology, default_topology
from .ppo import PPOAgent
from .predict import SeverityForecaster, build_input
from .scenario import (Category, ScenarioPack, region_travel_minutes,
                       REGION_EDGE_NODE)

__all__ = [
    "EventKind",
    "EngineConfig",
    "PolicyBundle",
    "OverrideDirective",
    "Decision",
    "SituationFrame",
    "RunRecord",
    "Engine",
    "resolve_conflicts",
    "PackValidationError",
]


class PackValidationError(ValueError):
    pass


class EventKind(str, Enum):
    SENSOR_READING = "SensorReading"
    MESSAGE_DELIVERY = "MessageDelivery"
    AGENT_DECISION_DUE = "AgentDecisionDue"
    DISPATCH_ARRIVAL = "DispatchArrival"
    FAILURE_INJECT = "FailureInject"
    OVERRIDE_WINDOW_EXPIRY = "OverrideWindowExpiry"
    SCENARIO_END = "ScenarioEnd"


# fixed tie-break at equal timestamps; lower runs first
KIND_PRIORITY = {
    EventKind.FAILURE_INJECT: 0,
    EventKind.MESSAGE_DELIVERY: 1,
    EventKind.SENSOR_READING: 2,
    EventKind.AGENT_DECISION_DUE: 3,
    EventKind.DISPATCH_ARRIVAL: 4,
    EventKind.OVERRIDE_WINDOW_EXPIRY: 5,
    EventKind.SCENARIO_END: 6,
}

# static channel -> category table used by the rule-based alert path
RULE_CHANNEL_CATEGORY = {
    "thermal": Category.WILDFIRE,
    "wind": Category.SEVERE_STORM,
    "barometric": Category.HURRICANE,
    "water_level": Category.FLOOD,
}


@dataclass(frozen=True)
class EngineConfig:
    decision_period_ms: float = 5000.0
    fusion_window_ms: float = 60_000.0
    override_window_ms: float = 10_000.0
    units_per_type: int = 3
    service_time_s: float = 120.0
    decision_proc_base_ms: float = 2000.0
    decision_proc_per_incident_ms: float = 800.0
    rule_alert_min_severity: float = 4.0
    rule_alert_corroboration: int = 3
    reading_bytes: int = 512
    command_bytes: int = 256
    forecast_step_s: float = 300.0
    speedup: float = 0.0            # interactive pacing: sim ms per wall ms; 0 = no pacing
    failures: tuple[tuple[str, str, float, float], ...] = ()
    # each failure: (kind "link"|"node", target "a-b" or node id, at_ms, duration_ms)


@dataclass
class PolicyBundle:
    """Trained agents for the agentic pipeline; None fields fall back to rules."""

    classifier: TextClassifier | None = None
    forecaster: SeverityForecaster | None = None
    allocator: PPOAgent | None = None


@dataclass
class OverrideDirective:
    decision_id: str
    verdict: str                     # Approve | Override | Modify
    replacement: int | None = None
    author: str = "operator"
    sim_time_ms: float | None = None   # stamped by the engine (or by a transcript)
    _reply: "queue.Queue | None" = field(default=None, repr=False, compare=False)


@dataclass
class Decision:
    decision_id: str
    incident_id: str
    slot_idx: int
    action: int
    issued_ms: float
    frame_ms: float
    status: str = "Pending"          # Pending -> AutoApproved/Approved/Overridden/Modified
    executed_action: int | None = None
    resolved_ms: float | None = None
    snapshot: dict | None = None


@dataclass
class SituationFrame:
    frame_id: str
    time_ms: float
    incidents: list[dict]
    alerts: list[str]
    forecasts: dict[str, list[float]]


@dataclass
class _Incident:
    incident_id: str
    event_id: str
    region: str
    category_true: Category
    classified: Category
    first_evidence_ms: float
    severity: float
    demands: tuple[int, int, int, int]
    slot_idx: int | None = None
    unmet: tuple[int, int, int, int] = (0, 0, 0, 0)
    dispatched: tuple[int, int, int, int] = (0, 0, 0, 0)
    pending_arrivals: int = 0
    last_arrival_ms: float | None = None
    resolved_ms: float | None = None


@dataclass
class RunRecord:
    pack_id: str
    seed: int
    mode: str
    policy: str
    log: list[dict]
    report: dict
    out_dir: Path | None

    def events_of(self, kind: str) -> list[dict]:
        return [e for e in self.log if e["kind"] == kind]


def resolve_conflicts(proposals: list[dict], available: tuple[int, ...]) -> list[dict]:
    """Coordination rule over simultaneous dispatch proposals.

    When proposals for one resource type exceed its availability, the
    higher-severity incident wins; ties go to the earlier onset, then the
    lower slot index. Surviving proposals keep their input order.
    """
    keep: set[int] = set()
    for r in range(N_TYPES):
        claims = [(k, p) for k, p in enumerate(proposals)
                  if p["type"] == r]
        claims.sort(key=lambda kp: (-kp[1]["severity"], kp[1]["onset_ms"],
                                    kp[1]["slot_idx"]))
        for k, _ in claims[:available[r]]:
            keep.add(k)
    return [p for k, p in enumerate(proposals) if k in keep]


class Engine:
    def __init__(self, pack: ScenarioPack, config: EngineConfig = EngineConfig(),
                 mode: str = "batch", policy: str = "baseline",
                 bundle: PolicyBundle | None = None,
                 topology: Topology | None = None,
                 net_config: NetConfig = NetConfig(),
                 seed: int = 0, out_dir=None, observer=None):
        if mode not in ("batch", "interactive"):
            raise ValueError(f"bad mode {mode!r}")
        if policy not in ("baseline", "agentic"):
            raise ValueError(f"bad policy {policy!r}")
        self._validate_pack(pack)
        bundle = bundle or PolicyBundle()
        if policy == "agentic" and bundle.classifier is None:
            raise ValueError("agentic policy needs a trained classifier")
        self.pack = pack
        self.config = config
        self.mode = mode
        self.policy_name = policy
        self.bundle = bundle
        self.seed = seed
        self.out_dir = Path(out_dir) if out_dir else None
        self.observer = observer

        self.topology = topology or default_topology()
        self.net = NetworkSim(self.topology, net_config)
        self.central = self.topology.central_id()
        self.bus = MessageBroker()
        self.graph = KnowledgeGraph()
        self.rng = np.random.default_rng(seed)

        self.now = 0.0
        self._seq = 0
        self._heap: list[tuple[float, int, int, EventKind, dict]] = []
        self.log: list[dict] = []
        self._api_seq = 0

        self.pool = ResourcePool.fresh(config.units_per_type)
        self.slots: list[_Incident | None] = [None] * N_SLOTS
        self.wait_queue: list[_Incident] = []
        self.incidents: dict[str, _Incident] = {}
        self._region_active: dict[str, _Incident] = {}

        self.decisions: dict[str, Decision] = {}
        self._alerted_regions: set[str] = set()
        self._corroboration: dict[str, int] = {}
        self._recent_readings: list[dict] = []   # delivered readings (for fusion)
        self._frame_count = 0
        self._alert_count = 0
        self._decision_count = 0
        self._msg_count = 0

        self.command_queue: "queue.Queue[OverrideDirective]" = queue.Queue()
        self.transcript: list[dict] = []
        self.feedback_buffer: list[dict] = []
        self._stopped = False
        self._inflight_readings: dict = {}
        self._inflight_commands: dict = {}
        self._replay_transcript: list[dict] = []

    # -- validation -----------------------------------------------------------

    @staticmethod
    def _validate_pack(pack: ScenarioPack) -> None:
        if pack.duration_s <= 0:
            raise PackValidationError("pack duration must be positive")
        for r in pack.sensor_streams:
            if r.region_code not in REGION_EDGE_NODE:
                raise PackValidationError(f"reading {r.reading_id}: unknown region")
            if not (0.0 <= r.time_s <= pack.duration_s):
                raise PackValidationError(f"reading {r.reading_id}: time out of range")
        for gt in pack.ground_truth.values():
            if gt.onset_s > gt.end_s:
                raise PackValidationError(f"event {gt.event_id}: onset after end")

    # -- event plumbing --------------------------------------------------------

    def _push(self, t_ms: float, kind: EventKind, payload: dict) -> None:
        self._seq += 1
        heapq.heappush(self._heap, (t_ms, KIND_PRIORITY[kind], self._seq, kind, payload))

    def _log(self, kind: EventKind | str, t_ms: float, **payload) -> dict:
        rec = {"t": round(t_ms, 6), "seq": len(self.log),
               "kind": kind.value if isinstance(kind, EventKind) else kind}
        rec.update(payload)
        self.log.append(rec)
        return rec

    def _emit(self, kind: str, **payload) -> None:
        """Push a projection event to the API observer, if any."""
        if self.observer is None:
            return
        self._api_seq += 1
        self.observer({"seq": self._api_seq, "t": self.now, "kind": kind, **payload})

    # -- main loop --------------------------------------------------------------

    def run(self) -> RunRecord:
        duration_ms = self.pack.duration_s * 1000.0
        for r in self.pack.sensor_streams:
            self._push(r.time_s * 1000.0, EventKind.SENSOR_READING, {"reading": r})
        t = self.config.decision_period_ms
        while t < duration_ms:
            self._push(t, EventKind.AGENT_DECISION_DUE, {})
            t += self.config.decision_period_ms
        for kind, target, at_ms, dur_ms in self.config.failures:
            tgt = tuple(target.split("-")) if kind == "link" else target
            self.net.inject_failure(tgt, at_ms, dur_ms)
            self._push(at_ms, EventKind.FAILURE_INJECT,
                       {"target": target, "duration_ms": dur_ms})
        self._push(duration_ms, EventKind.SCENARIO_END, {})

        last_wall = wallclock.monotonic()
        while self._heap and not self._stopped:
            t_master = self._heap[0][0]
            t_net = self.net.next_event_time()
            if t_net is not None and t_net < t_master:
                for msg in self.net.advance(t_net):
                    self._push(msg.deliver_time, EventKind.MESSAGE_DELIVERY,
                               {"msg": msg})
                continue

            if self.mode == "interactive" and self.config.speedup > 0:
                wait_ms = (t_master - self.now) / self.config.speedup
                deadline = last_wall + wait_ms / 1000.0
                while True:
                    self._drain_commands()
                    remaining = deadline - wallclock.monotonic()
                    if remaining <= 0:
                        break
                    wallclock.sleep(min(0.01, remaining))
                last_wall = wallclock.monotonic()
            self._drain_commands()
            self._apply_transcript_until(t_master)

            t, _, _, kind, payload = heapq.heappop(self._heap)
            self.now = t
            self.net.advance(t)
            handler = getattr(self, f"_on_{kind.name.lower()}")
            handler(t, payload)
            if kind == EventKind.SCENARIO_END:
                break
        return self._finalize()

    # -- command ingress ---------------------------------------------------------

    def _drain_commands(self) -> None:
        while True:
            try:
                directive = self.command_queue.get_nowait()
            except queue.Empty:
                return
            directive.sim_time_ms = self.now
            accepted, reason = self.apply_override(directive)
            self.transcript.append({
                "t": self.now, "decision_id": directive.decision_id,
                "verdict": directive.verdict, "replacement": directive.replacement,
                "author": directive.author, "accepted": accepted, "reason": reason,
            })
            if directive._reply is not None:
                directive._reply.put((accepted, reason))

    def attach_transcript(self, entries: list[dict]) -> None:
        """Queue a recorded directive transcript for deterministic replay."""
        self._replay_transcript = sorted(
            (dict(e) for e in entries), key=lambda e: e["t"])

    def _apply_transcript_until(self, t_ms: float) -> None:
        while self._replay_transcript and self._replay_transcript[0]["t"] <= t_ms:
            entry = self._replay_transcript.pop(0)
            directive = OverrideDirective(
                decision_id=entry["decision_id"], verdict=entry["verdict"],
                replacement=entry.get("replacement"), author=entry.get("author", ""),
                sim_time_ms=entry["t"])
            self.now = max(self.now, entry["t"])
            accepted, reason = self.apply_override(directive)
            self.transcript.append({**entry, "accepted": accepted, "reason": reason})

    # -- event handlers ------------------------------------------------------------

    def _on_sensor_reading(self, t: float, payload: dict) -> None:
        reading = payload["reading"]
        self._msg_count += 1
        self._log(EventKind.SENSOR_READING, t, reading_id=reading.reading_id,
                  region=reading.region_code, node=reading.source_node,
                  severity_obs=round(reading.severity_obs, 6), channel=reading.kind)
        self.net.transmit(f"rd-{self._msg_count}", reading.source_node, self.central,
                          self.config.reading_bytes, MISSION_SLICE, t)
        self._inflight_readings[f"rd-{self._msg_count}"] = reading

    def _on_message_delivery(self, t: float, payload: dict) -> None:
        msg = payload["msg"]
        self._log(EventKind.MESSAGE_DELIVERY, t, msg_id=msg.msg_id,
                  src=msg.src, dst=msg.dst, bytes=msg.size_bytes)
        if msg.msg_id.startswith("rd-"):
            reading = self._inflight_readings.pop(msg.msg_id)
            self.bus.publish("sensor.readings", json.dumps({
                "reading_id": reading.reading_id, "region": reading.region_code,
                "severity_obs": reading.severity_obs, "channel": reading.kind,
                "text": reading.text, "emitted_s": reading.time_s,
            }, sort_keys=True), key=reading.region_code, publish_time=t)
            self._recent_readings.append({
                "t": t, "region": reading.region_code,
                "severity": reading.severity_obs, "reading": reading,
            })
            self._maybe_alert_on(reading, t)
        elif msg.msg_id.startswith("cmd-"):
            cmd = self._inflight_commands.pop(msg.msg_id)
            self._log("CommandDelivered", t, decision_id=cmd["decision_id"],
                      incident_id=cmd["incident_id"])
            self._push(t + cmd["travel_ms"], EventKind.DISPATCH_ARRIVAL, cmd)

    # -- alerting -------------------------------------------------------------------

    def _maybe_alert_on(self, reading, t: float) -> None:
        region = reading.region_code
        if region in self._alerted_regions:
            return
        if self.policy_name == "agentic":
            self._alert_count += 1
            alert = maybe_alert(self.bundle.classifier, reading.text,
                                reading.reading_id, t, f"al-{self._alert_count:04d}")
            if alert is None:
                self._alert_count -= 1
                return
            self._raise_alert(region, alert.predicted_class, alert.confidence,
                              reading, t)
        else:
            if reading.severity_obs < self.config.rule_alert_min_severity:
                return
            counts = self._corroboration.setdefault(region, {})
            counts[reading.kind] = counts.get(reading.kind, 0) + 1
            if sum(counts.values()) < self.config.rule_alert_corroboration:
                return
            # classify by the modal qualifying channel; ties break on the
            # fixed channel order of the rule table
            order = list(RULE_CHANNEL_CATEGORY)
            kind = max(counts, key=lambda k: (counts[k], -order.index(k)))
            category = RULE_CHANNEL_CATEGORY.get(kind, Category.NONE)
            if category == Category.NONE:
                return
            self._alert_count += 1
            self._raise_alert(region, category, 1.0, reading, t)

    def _raise_alert(self, region: str, category: Category, confidence: float,
                     reading, t: float) -> None:
        self._alerted_regions.add(region)
        alert_id = f"al-{self._alert_count:04d}"
        self._log("Alert", t, alert_id=alert_id, region=region,
                  predicted_class=category.value, confidence=round(confidence, 6),
                  source_reading=reading.reading_id,
                  lat=round(reading.lat, 6), lon=round(reading.lon, 6))
        self.bus.publish("alerts", json.dumps({
            "alert_id": alert_id, "region": region, "class": category.value,
            "confidence": confidence}, sort_keys=True),
            key=region, publish_time=t)
        self._emit("alert", alert_id=alert_id, region=region,
                   predicted_class=category.value, confidence=confidence)
        self._activate_incident(region, category, reading, t)

    def _activate_incident(self, region: str, category: Category, reading,
                           t: float) -> None:
        event = self._matching_event(region, t)
        if event is None:
            return  # phantom alert: scored by the false-alarm metric only
        gt = self.pack.ground_truth[event.event_id]
        inc = _Incident(
            incident_id=f"inc-{event.event_id}",
            event_id=event.event_id,
            region=region,
            category_true=gt.category,
            classified=category,
            first_evidence_ms=t,
            severity=reading.severity_obs,
            demands=gt.demands,
            unmet=gt.demands,
        )
        self.incidents[inc.incident_id] = inc
        self._region_active[region] = inc
        self.graph.upsert_node(inc.incident_id, NodeKind.INCIDENT, {
            "region": region, "classified": category.value,
            "confirmed_ms": t, "severity": round(inc.severity, 4)})
        free = [i for i in range(N_SLOTS) if self.slots[i] is None]
        if free:
            self._occupy_slot(free[0], inc, t)
        else:
            self.wait_queue.append(inc)
            self.wait_queue.sort(key=lambda x: (-x.severity, x.first_evidence_ms))
        self._log("IncidentConfirmed", t, incident_id=inc.incident_id,
                  event_id=event.event_id, region=region,
                  classified=category.value, demands=list(inc.demands),
                  slot=inc.slot_idx)
        self._emit("incident_update", incident_id=inc.incident_id, region=region,
                   severity=inc.severity, unmet=list(inc.unmet), status="confirmed")

    def _matching_event(self, region: str, t_ms: float):
        t_s = t_ms / 1000.0
        for e in self.pack.events:
            gt = self.pack.ground_truth[e.event_id]
            if e.region_code == region and gt.onset_s <= t_s <= gt.end_s + 120.0 \
                    and f"inc-{e.event_id}" not in self.incidents:
                return e
        return None

    def _occupy_slot(self, idx: int, inc: _Incident, t: float) -> None:
        inc.slot_idx = idx
        self.slots[idx] = inc

    # -- perception / decision ----------------------------------------------------

    def perceive(self, t: float) -> SituationFrame:
        """Situation frame from messages delivered at or before t.

        Duplicate readings per incident fuse by max severity over the fusion
        window; the result is independent of delivery order.
        """
        self._frame_count += 1
        window_lo = t - self.config.fusion_window_ms
        fused: dict[str, float] = {}
        for rec in self._recent_readings:
            if window_lo < rec["t"] <= t:
                region = rec["region"]
                fused[region] = max(fused.get(region, 0.0), rec["severity"])
        incidents = []
        for idx, inc in enumerate(self.slots):
            if inc is None:
                continue
            if inc.region in fused:
                inc.severity = fused[inc.region]
            incidents.append({
                "incident_id": inc.incident_id, "slot_idx": idx,
                "region": inc.region, "severity": inc.severity,
                "unmet": list(inc.unmet),
                "elapsed_ms": t - inc.first_evidence_ms,
            })
        return SituationFrame(
            frame_id=f"fr-{self._frame_count:05d}", time_ms=t,
            incidents=incidents, alerts=sorted(self._alerted_regions),
            forecasts={})

    def _world_snapshot(self, t: float) -> AllocWorld:
        slots = []
        for inc in self.slots:
            if inc is None:
                slots.append(IncidentSlot.empty())
            else:
                slots.append(IncidentSlot(
                    active=True, incident_id=inc.incident_id,
                    severity=inc.severity, unmet=inc.unmet,
                    initial_demand=max(1, sum(inc.demands)),
                    elapsed_s=(t - inc.first_evidence_ms) / 1000.0,
                    onset_s=inc.first_evidence_ms / 1000.0,
                    travel_minutes=region_travel_minutes(inc.region)))
        return AllocWorld(pool=self.pool, slots=tuple(slots),
                          clock_s=t / 1000.0,
                          horizon_s=self.pack.duration_s)

    @staticmethod
    def _feasible_actions(world: AllocWorld) -> set[int]:
        out = set()
        for i, s in enumerate(world.slots):
            if not s.active:
                continue
            for r in range(N_TYPES):
                if s.unmet[r] > 0 and world.pool.available[r] > 0:
                    out.add(alloc.encode_action(r, i))
        return out

    def _propose(self, world: AllocWorld) -> list[int]:
        """Up to one dispatch proposal per active needy incident, sequentially
        applied to a scratch world so proposals never overclaim.

        The learned policy proposes through a feasibility mask: the
        observation aggregates per-slot demand across types, so the executor
        enforces type validity while the policy supplies the priorities.
        The rule ladder reads the world directly and stays unmasked.
        """
        n_needy = sum(1 for s in world.slots if s.active and s.total_unmet() > 0)
        proposals = []
        scratch = world
        for _ in range(n_needy):
            if self.policy_name == "agentic" and self.bundle.allocator is not None:
                feasible = self._feasible_actions(scratch)
                if not feasible:
                    break
                a = self.bundle.allocator.act_masked(encode_state(scratch), feasible)
            else:
                a = baseline_policy(scratch)
            if a == NOOP_ACTION:
                break
            r, i = decode_action(a)
            slot = scratch.slots[i]
            if not slot.active or scratch.pool.available[r] == 0 or slot.unmet[r] == 0:
                break  # rule ladder proposed a no-effect dispatch; stand down
            proposals.append(a)
            unmet = list(slot.unmet)
            unmet[r] -= 1
            new_slots = list(scratch.slots)
            new_slots[i] = replace(slot, unmet=tuple(unmet))
            scratch = replace(scratch, pool=scratch.pool.dispatch(r),
                              slots=tuple(new_slots))
        return proposals

    def _on_agent_decision_due(self, t: float, payload: dict) -> None:
        self._promote_queue(t)
        self._check_resolutions(t)
        frame = self.perceive(t)
        world = self._world_snapshot(t)
        self._log("Frame", t, frame_id=frame.frame_id,
                  incidents=[i["incident_id"] for i in frame.incidents])

        if self.policy_name == "agentic" and self.bundle.forecaster is not None:
            for item in frame.incidents:
                self._publish_forecast(item, t)
        elif self.policy_name == "baseline":
            for item in frame.incidents:
                self._publish_persistence_forecast(item, t)

        proposals = self._propose(world)
        if not proposals:
            return
        prop_dicts = []
        for a in proposals:
            r, i = decode_action(a)
            inc = self.slots[i]
            prop_dicts.append({
                "action": a, "type": r, "slot_idx": i,
                "severity": inc.severity, "onset_ms": inc.first_evidence_ms,
            })
        surviving = resolve_conflicts(prop_dicts, self.pool.available)

        n_known = len([s for s in self.slots if s is not None]) + len(self.wait_queue)
        proc_ms = (self.config.decision_proc_base_ms
                   + self.config.decision_proc_per_incident_ms * n_known)
        issue_t = t + proc_ms
        for p in surviving:
            inc = self.slots[p["slot_idx"]]
            self._decision_count += 1
            d = Decision(
                decision_id=f"dec-{self._decision_count:04d}",
                incident_id=inc.incident_id, slot_idx=p["slot_idx"],
                action=p["action"], issued_ms=issue_t, frame_ms=t,
                snapshot=self._snapshot_dict(world))
            self.decisions[d.decision_id] = d
            self.graph.upsert_node(d.decision_id, NodeKind.DECISION, {
                "incident": inc.incident_id, "action": d.action,
                "issued_ms": issue_t, "status": d.status})
            self.graph.add_edge(d.decision_id, inc.incident_id, "TARGETS")
            self._log("DecisionIssued", issue_t, decision_id=d.decision_id,
                      incident_id=inc.incident_id, action=d.action,
                      frame_ms=t, n_known_incidents=n_known,
                      snapshot=d.snapshot)
            self.bus.publish("decisions", json.dumps({
                "decision_id": d.decision_id, "incident": inc.incident_id,
                "action": d.action}, sort_keys=True),
                key=inc.incident_id, publish_time=issue_t)
            self._emit("decision_issued", decision_id=d.decision_id,
                       incident_id=inc.incident_id, action=d.action,
                       window_expires_ms=(issue_t + self.config.override_window_ms
                                          if self.mode == "interactive" else issue_t))
            if self.mode == "batch":
                self._resolve_decision(d, "AutoApproved", d.action, issue_t)
            else:
                self._push(issue_t + self.config.override_window_ms,
                           EventKind.OVERRIDE_WINDOW_EXPIRY,
                           {"decision_id": d.decision_id})

    def _snapshot_dict(self, world: AllocWorld) -> dict:
        return {
            "available": list(world.pool.available),
            "slots": [
                {"active": s.active, "incident_id": s.incident_id,
                 "severity": round(s.severity, 6), "unmet": list(s.unmet),
                 "travel_minutes": s.travel_minutes}
                for s in world.slots
            ],
        }

    def _publish_forecast(self, item: dict, t: float) -> None:
        inc = self.slots[item["slot_idx"]]
        cat_idx = list(Category).index(inc.classified) if inc.classified != Category.NONE else 0
        trailing = [rec["severity"] for rec in self._recent_readings
                    if rec["region"] == inc.region][-8:]
        engaged = [self.pool.deployed[r] / max(1, self.pool.total[r])
                   for r in range(N_TYPES)]
        x = build_input(cat_idx, inc.severity, 0.0, 0.0,
                        day_of_year=1.0, hour=(t / 3.6e6) % 24,
                        trailing=trailing, engaged=engaged)
        out = self.bundle.forecaster.forecast(x)
        self._log("Forecast", t, incident_id=inc.incident_id,
                  step_s=self.config.forecast_step_s,
                  mean=[round(m, 6) for m in out.mean],
                  variance=[round(v, 9) for v in out.variance])
        self._emit("forecast", incident_id=inc.incident_id,
                   step_s=self.config.forecast_step_s,
                   mean=[round(m, 6) for m in out.mean],
                   variance=[round(v, 9) for v in out.variance])
        self.bus.publish("predictions", json.dumps({
            "incident": inc.incident_id, "mean": list(out.mean),
            "variance": list(out.variance)}, sort_keys=True),
            key=inc.incident_id, publish_time=t)

    def _publish_persistence_forecast(self, item: dict, t: float) -> None:
        """Rule-based stand-in: severity holds constant with a fixed band."""
        inc = self.slots[item["slot_idx"]]
        horizon = 6
        mean = [round(inc.severity, 6)] * horizon
        variance = [1.0] * horizon
        self._log("Forecast", t, incident_id=inc.incident_id,
                  step_s=self.config.forecast_step_s, mean=mean,
                  variance=variance)
        self._emit("forecast", incident_id=inc.incident_id,
                   step_s=self.config.forecast_step_s, mean=mean,
                   variance=variance)
        self.bus.publish("predictions", json.dumps({
            "incident": inc.incident_id, "mean": mean, "variance": variance},
            sort_keys=True), key=inc.incident_id, publish_time=t)

    # -- decision resolution --------------------------------------------------------

    def apply_override(self, directive: OverrideDirective) -> tuple[bool, str]:
        """Apply an operator verdict to a pending decision.

        The window opens the moment the decision is proposed (it is already
        visible on the console then) and closes one window length after the
        formal issue time; a verdict accepted before the issue time takes
        effect at the issue time, never earlier.
        """
        d = self.decisions.get(directive.decision_id)
        t = directive.sim_time_ms if directive.sim_time_ms is not None else self.now
        if d is None:
            return False, "unknown_decision"
        if d.status != "Pending":
            return False, "window_expired" if d.resolved_ms is not None else "already_resolved"
        if t > d.issued_ms + self.config.override_window_ms:
            return False, "window_expired"
        verdict = directive.verdict
        if verdict not in ("Approve", "Override", "Modify"):
            return False, "bad_verdict"
        if verdict in ("Override", "Modify"):
            if directive.replacement is None:
                return False, "replacement_required"
            try:
                decode_action(directive.replacement)
            except Exception:
                return False, "invalid_replacement"
            executed = directive.replacement
            status = "Overridden" if verdict == "Override" else "Modified"
        else:
            executed = d.action
            status = "Approved"
        t_eff = max(t, d.issued_ms)
        self._resolve_decision(d, status, executed, t_eff, author=directive.author)
        self.feedback_buffer.append({
            "decision_id": d.decision_id,
            "state": [round(float(v), 9) for v in
                      encode_state(self._world_snapshot(t_eff))],
            "original_action": d.action, "executed_action": executed,
            "verdict": status, "t": t_eff,
        })
        return True, "ok"

    def _on_override_window_expiry(self, t: float, payload: dict) -> None:
        d = self.decisions.get(payload["decision_id"])
        self._log(EventKind.OVERRIDE_WINDOW_EXPIRY, t, decision_id=d.decision_id,
                  status=d.status)
        self._emit("window_expiry", decision_id=d.decision_id, status=d.status)
        if d.status == "Pending":
            self._resolve_decision(d, "AutoApproved", d.action, t)

    def _resolve_decision(self, d: Decision, status: str, executed: int,
                          t: float, author: str | None = None) -> None:
        d.status = status
        d.executed_action = executed
        d.resolved_ms = t
        node = self.graph.get_node(d.decision_id)
        props = dict(node.props)
        props["status"] = status
        self.graph.upsert_node(d.decision_id, NodeKind.DECISION, props)
        verdict_map = {"Approved": "Approved", "Overridden": "Overridden",
                       "Modified": "Modified", "AutoApproved": "Approved"}
        self.graph.record_feedback(
            d.decision_id, verdict_map[status],
            replacement=executed if executed != d.action else None,
            author=author or ("system" if status == "AutoApproved" else "operator"))
        self._log("DecisionResolved", t, decision_id=d.decision_id, status=status,
                  executed_action=executed, original_action=d.action)
        self._emit("decision_resolved", decision_id=d.decision_id, status=status,
                   executed_action=executed)
        self._execute_dispatch(d, executed, t)

    def _execute_dispatch(self, d: Decision, action: int, t: float) -> None:
        target = decode_action(action)
        if target is None:
            return
        r, i = target
        inc = self.slots[i] if i < len(self.slots) else None
        if inc is None or self.pool.available[r] == 0 or inc.unmet[r] == 0:
            self._log("DispatchWasted", t, decision_id=d.decision_id, action=action)
            return
        self.pool = self.pool.dispatch(r)
        unmet = list(inc.unmet)
        unmet[r] -= 1
        inc.unmet = tuple(unmet)
        disp = list(inc.dispatched)
        disp[r] += 1
        inc.dispatched = tuple(disp)
        inc.pending_arrivals += 1
        self._msg_count += 1
        cmd_id = f"cmd-{self._msg_count}"
        travel_ms = region_travel_minutes(inc.region) * 60_000.0
        self._inflight_commands[cmd_id] = {
            "decision_id": d.decision_id, "incident_id": inc.incident_id,
            "type": r, "slot_idx": i, "travel_ms": travel_ms, "frame_ms": d.frame_ms,
        }
        self.net.transmit(cmd_id, self.central, REGION_EDGE_NODE[inc.region],
                          self.config.command_bytes, MISSION_SLICE, t)
        self.graph.upsert_node(f"unit-{d.decision_id}", NodeKind.RESOURCE,
                               {"type": alloc.RESOURCE_TYPES[r]})
        self.graph.add_edge(f"unit-{d.decision_id}", inc.incident_id, "ALLOCATED_TO")
        self._log("DispatchCommitted", t, decision_id=d.decision_id,
                  incident_id=inc.incident_id, type=r, slot_idx=i)

    def _on_dispatch_arrival(self, t: float, cmd: dict) -> None:
        inc = self.incidents.get(cmd["incident_id"])
        self._log(EventKind.DISPATCH_ARRIVAL, t, decision_id=cmd["decision_id"],
                  incident_id=cmd["incident_id"], type=cmd["type"],
                  frame_ms=cmd["frame_ms"])
        self._emit("dispatch_arrival", decision_id=cmd["decision_id"],
                   incident_id=cmd["incident_id"], type=cmd["type"])
        if inc is not None:
            inc.pending_arrivals -= 1
            inc.last_arrival_ms = t

    def _on_failure_inject(self, t: float, payload: dict) -> None:
        self._log(EventKind.FAILURE_INJECT, t, **payload)

    # -- lifecycle ---------------------------------------------------------------

    def _promote_queue(self, t: float) -> None:
        free = [i for i in range(N_SLOTS) if self.slots[i] is None]
        while free and self.wait_queue:
            inc = self.wait_queue.pop(0)
            self._occupy_slot(free.pop(0), inc, t)
            self._log("IncidentSlotted", t, incident_id=inc.incident_id,
                      slot=inc.slot_idx)

    def _check_resolutions(self, t: float) -> None:
        for i in range(N_SLOTS):
            inc = self.slots[i]
            if inc is None:
                continue
            demand_met = sum(inc.unmet) == 0 and inc.pending_arrivals == 0
            if demand_met and inc.last_arrival_ms is not None and \
                    t >= inc.last_arrival_ms + self.config.service_time_s * 1000.0:
                inc.resolved_ms = t
                self.pool = self.pool.release(inc.dispatched)
                inc.dispatched = (0, 0, 0, 0)
                self.slots[i] = None
                del self._region_active[inc.region]
                self._alerted_regions.discard(inc.region)
                self._corroboration.pop(inc.region, None)
                outcome_id = f"out-{inc.incident_id}"
                self.graph.upsert_node(outcome_id, NodeKind.OUTCOME,
                                       {"resolved_ms": t})
                self.graph.add_edge(inc.incident_id, outcome_id, "RESULTED_IN")
                self._log("IncidentResolved", t, incident_id=inc.incident_id)
                self._emit("incident_update", incident_id=inc.incident_id,
                           region=inc.region, severity=inc.severity,
                           unmet=[0, 0, 0, 0], status="resolved")

    def _on_scenario_end(self, t: float, payload: dict) -> None:
        for d in self.decisions.values():
            if d.status == "Pending":
                self._resolve_decision(d, "AutoApproved", d.action, t)
        self._log(EventKind.SCENARIO_END, t, decisions=len(self.decisions),
                  incidents=len(self.incidents))
        self._emit("scenario_end")
        self._stopped = True

    # -- finalization ----------------------------------------------------------------

    def _finalize(self) -> RunRecord:
        # decisions are logged at their effective (issue) times, which can sit
        # beyond the tick that computed them; order the audit log by time
        self.log.sort(key=lambda e: e["t"])
        for i, e in enumerate(self.log):
            e["seq"] = i
        netstats = self.net.stats()
        report = metrics_mod.compute_report(
            log=self.log, pack=self.pack, netstats=netstats,
            mode=self.mode, policy=self.policy_name)
        record = RunRecord(pack_id=self.pack.pack_id, seed=self.seed,
                           mode=self.mode, policy=self.policy_name,
                           log=self.log, report=report, out_dir=self.out_dir)
        if self.out_dir is not None:
            self._write_artifacts(record, netstats)
        return record

    def _write_artifacts(self, record: RunRecord, netstats) -> None:
        out = self.out_dir
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "events.jsonl", "w", encoding="utf-8") as fh:
            for rec in self.log:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        self.bus.snapshot(out / "bus")
        self.graph.snapshot(out / "kgraph.jsonl")
        with open(out / "netstats.json", "w", encoding="utf-8") as fh:
            json.dump({
                "offered": netstats.offered, "delivered": netstats.delivered,
                "dropped": netstats.dropped,
                "bytes_delivered": netstats.bytes_delivered,
                "availability_fraction": netstats.availability_fraction,
                "recovery_events": netstats.recovery_events,
            }, fh, sort_keys=True, indent=2)
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(record.report, fh, sort_keys=True, indent=2)
        with open(out / "meta.json", "w", encoding="utf-8") as fh:
            json.dump({"pack_id": self.pack.pack_id, "seed": self.seed,
                       "mode": self.mode, "policy": self.policy_name},
                      fh, sort_keys=True, indent=2)
        with open(out / "feedback_buffer.jsonl", "w", encoding="utf-8") as fh:
            for rec in self.feedback_buffer:
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
        if self.mode == "interactive":
            with open(out / "transcript.jsonl", "w", encoding="utf-8") as fh:
                for rec in self.transcript:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
