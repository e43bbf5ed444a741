"""Run-report metrics with precise, testable definitions.

Every metric is a pure function of the event log, the scenario ground truth,
and the network stats summary; nothing reads live engine state, so a report
recomputed from a replayed log is identical to the original.

Definitions (all configurable where noted):

* response time: ground-truth onset to the first dispatch arrival for the
  incident, mean over served incidents, minutes. Unserved incidents are
  excluded from the mean and counted separately.
* decision latency: frame trigger to delivery of the dispatch command at the
  edge node (falls back to decision resolution time when no command was
  sent), seconds; mean and p95.
* alert generation: onset to the first alert in the event's region, seconds.
* situation assessment accuracy: events whose confirmed classification
  matches the true category, over all ground-truth events (never-confirmed
  events count as misses), percent.
* overall accuracy: alerts whose predicted class matches a ground-truth
  event active within the false-alarm window/radius, over all alerts,
  percent. This is this artifact's reading of the bare "accuracy" row, which
  has no separate published definition; it is flagged in the report.
* resource distribution index: executed dispatches whose (type, incident)
  pair appears in the optimal assignment for the decision-time snapshot,
  percent of executed dispatches.
* false alarm rate: alerts with no ground-truth event of any category active
  within 300 s and 50 km, percent of alerts; 0% when there are no alerts (by
  convention).
* prediction accuracy: per true category, the fraction of forecast horizon
  steps whose true severity lies inside the 90% interval, percent.
* network bandwidth: delivered payload bits during the active-incident
  window divided by that window, Mb/s.
* availability / recovery: from the network model (connectivity fraction;
  mean service-recovery minutes).
* CPU / memory rows are null by default: host telemetry is not comparable
  to any published cloud numbers and is only filled by the optional
  process sampler, clearly marked.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .alloc import AllocWorld, IncidentSlot, ResourcePool, decode_action, oracle_pairs
from .scenario import Category, ScenarioPack, load_pack

__all__ = [
    "MetricsConfig",
    "compute_report",
    "report_from_run_dir",
    "response_time_stats",
    "decision_latency_stats",
    "alert_generation_stats",
    "assessment_accuracy",
    "overall_accuracy",
    "distribution_index",
    "rt_efficiency",
    "false_alarm_rate",
    "prediction_accuracy",
    "network_bandwidth_mbps",
    "render_table",
    "TABLE_ROWS",
]


@dataclass(frozen=True)
class MetricsConfig:
    false_alarm_window_s: float = 300.0
    false_alarm_radius_km: float = 50.0
    z90: float = 1.645


def _events_of(log: list[dict], kind: str) -> list[dict]:
    return [e for e in log if e["kind"] == kind]


def _incident_event_map(log: list[dict]) -> dict[str, str]:
    return {e["incident_id"]: e["event_id"]
            for e in _events_of(log, "IncidentConfirmed")}


# ---------------------------------------------------------------------------
# timing metrics
# ---------------------------------------------------------------------------

def response_time_stats(log: list[dict], pack: ScenarioPack
                        ) -> tuple[float | None, int, int]:
    """(mean minutes over served incidents, served count, unserved count)."""
    inc_event = _incident_event_map(log)
    first_arrival: dict[str, float] = {}
    for e in _events_of(log, "DispatchArrival"):
        inc = e["incident_id"]
        if inc not in first_arrival:
            first_arrival[inc] = e["t"]
    times = []
    for inc, event_id in inc_event.items():
        if inc in first_arrival:
            onset_ms = pack.ground_truth[event_id].onset_s * 1000.0
            times.append((first_arrival[inc] - onset_ms) / 60_000.0)
    unserved = len(pack.ground_truth) - len(times)
    mean = float(np.mean(times)) if times else None
    return mean, len(times), unserved


def decision_latency_stats(log: list[dict]) -> tuple[float | None, float | None]:
    """(mean, p95) decision latency in seconds."""
    delivered: dict[str, float] = {}
    for e in _events_of(log, "CommandDelivered"):
        delivered.setdefault(e["decision_id"], e["t"])
    latencies = []
    for e in _events_of(log, "DecisionResolved"):
        end = delivered.get(e["decision_id"], e["t"])
        frame = _frame_of(log, e["decision_id"])
        if frame is not None:
            latencies.append((end - frame) / 1000.0)
    if not latencies:
        return None, None
    return float(np.mean(latencies)), float(np.percentile(latencies, 95))


def _frame_of(log: list[dict], decision_id: str) -> float | None:
    for e in _events_of(log, "DecisionIssued"):
        if e["decision_id"] == decision_id:
            return e["frame_ms"]
    return None


def alert_generation_stats(log: list[dict], pack: ScenarioPack) -> float | None:
    """Mean seconds from ground-truth onset to the first alert in the region."""
    first_alert: dict[str, float] = {}
    for e in _events_of(log, "Alert"):
        first_alert.setdefault(e["region"], e["t"])
    times = []
    for event in pack.events:
        gt = pack.ground_truth[event.event_id]
        t_alert = first_alert.get(event.region_code)
        if t_alert is not None and t_alert >= gt.onset_s * 1000.0:
            times.append((t_alert - gt.onset_s * 1000.0) / 1000.0)
    return float(np.mean(times)) if times else None


# ---------------------------------------------------------------------------
# classification metrics
# ---------------------------------------------------------------------------

def assessment_accuracy(log: list[dict], pack: ScenarioPack) -> float:
    """Percent of ground-truth events confirmed with the correct category."""
    confirmed = {e["event_id"]: e["classified"]
                 for e in _events_of(log, "IncidentConfirmed")}
    if not pack.ground_truth:
        return 100.0
    correct = sum(
        1 for event_id, gt in pack.ground_truth.items()
        if confirmed.get(event_id) == gt.category.value)
    return 100.0 * correct / len(pack.ground_truth)


def _haversine_km(lat1, lon1, lat2, lon2) -> float:
    r = 6371.0
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dp = math.radians(lat2 - lat1)
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl / 2) ** 2
    return 2 * r * math.asin(math.sqrt(a))


def _alert_matches_event(alert: dict, pack: ScenarioPack, cfg: MetricsConfig,
                         require_class: bool = False) -> bool:
    t_s = alert["t"] / 1000.0
    for event in pack.events:
        gt = pack.ground_truth[event.event_id]
        if not (gt.onset_s - cfg.false_alarm_window_s <= t_s
                <= gt.end_s + cfg.false_alarm_window_s):
            continue
        if _haversine_km(alert["lat"], alert["lon"], event.lat, event.lon) \
                > cfg.false_alarm_radius_km:
            continue
        if require_class and alert["predicted_class"] != gt.category.value:
            continue
        return True
    return False


def false_alarm_rate(log: list[dict], pack: ScenarioPack,
                     cfg: MetricsConfig = MetricsConfig()) -> float:
    """Percent of alerts with no active ground-truth event nearby; 0 if no alerts."""
    alerts = _events_of(log, "Alert")
    if not alerts:
        return 0.0
    false = sum(1 for a in alerts if not _alert_matches_event(a, pack, cfg))
    return 100.0 * false / len(alerts)


def overall_accuracy(log: list[dict], pack: ScenarioPack,
                     cfg: MetricsConfig = MetricsConfig()) -> float | None:
    """Percent of alerts naming the class of a nearby active event (flagged)."""
    alerts = _events_of(log, "Alert")
    if not alerts:
        return None
    hit = sum(1 for a in alerts
              if _alert_matches_event(a, pack, cfg, require_class=True))
    return 100.0 * hit / len(alerts)


# ---------------------------------------------------------------------------
# allocation metrics
# ---------------------------------------------------------------------------

def _world_from_snapshot(snapshot: dict) -> AllocWorld:
    slots = []
    for s in snapshot["slots"]:
        if s["active"]:
            slots.append(IncidentSlot(
                active=True, incident_id=s["incident_id"],
                severity=s["severity"], unmet=tuple(s["unmet"]),
                initial_demand=max(1, sum(s["unmet"])),
                travel_minutes=s["travel_minutes"]))
        else:
            slots.append(IncidentSlot.empty())
    avail = tuple(snapshot["available"])
    pool = ResourcePool(total=avail, available=avail, deployed=(0,) * 4)
    return AllocWorld(pool=pool, slots=tuple(slots))


def distribution_index(log: list[dict]) -> tuple[float | None, str | None]:
    """Percent of executed dispatches matching the snapshot-time optimum."""
    issued = {e["decision_id"]: e for e in _events_of(log, "DecisionIssued")}
    committed = {e["decision_id"] for e in _events_of(log, "DispatchCommitted")}
    total = correct = 0
    for e in _events_of(log, "DecisionResolved"):
        if e["decision_id"] not in committed:
            continue
        action = e["executed_action"]
        target = decode_action(action)
        if target is None:
            continue
        snapshot = issued[e["decision_id"]]["snapshot"]
        total += 1
        if tuple(target) in oracle_pairs(_world_from_snapshot(snapshot)):
            correct += 1
    if total == 0:
        return None, "no allocations executed"
    return 100.0 * correct / total, None


def rt_efficiency(baseline_rt: float, actual_rt: float) -> float:
    """Ratio of baseline response time to actual response time."""
    if actual_rt <= 0:
        raise ValueError("actual response time must be positive")
    return baseline_rt / actual_rt


# ---------------------------------------------------------------------------
# prediction metrics
# ---------------------------------------------------------------------------

def prediction_accuracy(log: list[dict], pack: ScenarioPack,
                        cfg: MetricsConfig = MetricsConfig()
                        ) -> dict[str, float | None]:
    """Per-category percent of horizon steps covered by the 90% interval."""
    inc_event = _incident_event_map(log)
    hits: dict[str, list[int]] = {c.value: [] for c in
                                  (Category.WILDFIRE, Category.SEVERE_STORM,
                                   Category.HURRICANE, Category.FLOOD)}
    for e in _events_of(log, "Forecast"):
        event_id = inc_event.get(e["incident_id"])
        if event_id is None:
            continue
        gt = pack.ground_truth[event_id]
        t_s = e["t"] / 1000.0
        for h, (mu, var) in enumerate(zip(e["mean"], e["variance"])):
            target_t = t_s + (h + 1) * e["step_s"]
            if target_t > gt.end_s:
                continue
            truth = gt.severity_at(target_t)
            half = cfg.z90 * math.sqrt(var)
            hits[gt.category.value].append(int(abs(truth - mu) <= half))
    return {cat: (100.0 * float(np.mean(v)) if v else None)
            for cat, v in hits.items()}


# ---------------------------------------------------------------------------
# network metrics
# ---------------------------------------------------------------------------

def network_bandwidth_mbps(log: list[dict], pack: ScenarioPack) -> float | None:
    """Delivered bits over the active-incident window, Mb/s."""
    if not pack.ground_truth:
        return None
    start_ms = min(gt.onset_s for gt in pack.ground_truth.values()) * 1000.0
    end_ms = max(gt.end_s for gt in pack.ground_truth.values()) * 1000.0
    resolved = [e["t"] for e in _events_of(log, "IncidentResolved")]
    if resolved:
        end_ms = max(end_ms, max(resolved))
    span_s = (end_ms - start_ms) / 1000.0
    if span_s <= 0:
        return None
    bits = sum(e.get("bytes", 0) * 8 for e in _events_of(log, "MessageDelivery")
               if start_ms <= e["t"] <= end_ms)
    return bits / span_s / 1e6


# ---------------------------------------------------------------------------
# report assembly
# ---------------------------------------------------------------------------

def _metric(value, reason=None, **extra):
    out = {"value": value}
    if value is None:
        out["reason"] = reason or "undefined for this run"
    out.update(extra)
    return out


def compute_report(log: list[dict], pack: ScenarioPack, netstats,
                   mode: str, policy: str,
                   cfg: MetricsConfig = MetricsConfig()) -> dict:
    rt_mean, served, unserved = response_time_stats(log, pack)
    lat_mean, lat_p95 = decision_latency_stats(log)
    alert_mean = alert_generation_stats(log, pack)
    dist, dist_reason = distribution_index(log)
    pred = prediction_accuracy(log, pack, cfg)

    if hasattr(netstats, "availability_fraction"):
        availability = netstats.availability_fraction
        recoveries = list(netstats.recovery_events)
    else:
        availability = netstats["availability_fraction"]
        recoveries = [tuple(r) for r in netstats["recovery_events"]]
    recovery_mean_min = (
        float(np.mean([(b - a) for a, b in recoveries])) / 60_000.0
        if recoveries else None)

    return {
        "schema_version": 1,
        "mode": mode,
        "policy": policy,
        "response_time_min": _metric(rt_mean, "no incident was served",
                                     served=served, unserved=unserved),
        "decision_latency_mean_s": _metric(lat_mean, "no decisions issued"),
        "decision_latency_p95_s": _metric(lat_p95, "no decisions issued"),
        "alert_generation_s": _metric(alert_mean, "no alerts matched an event"),
        "situation_assessment_pct": _metric(assessment_accuracy(log, pack)),
        "resource_distribution_pct": _metric(dist, dist_reason),
        "overall_accuracy_pct": _metric(
            overall_accuracy(log, pack, cfg), "no alerts",
            note="no published definition distinct from situation assessment; "
                 "reported as alert-level class accuracy"),
        "false_alarm_pct": _metric(false_alarm_rate(log, pack, cfg)),
        "cpu_utilization_pct": _metric(None, "host telemetry out of scope"),
        "memory_usage_gb": _metric(None, "host telemetry out of scope"),
        "network_bandwidth_mbps": _metric(network_bandwidth_mbps(log, pack),
                                          "no active-incident window"),
        "system_availability_pct": _metric(100.0 * availability),
        "recovery_time_min": _metric(recovery_mean_min, "no recovery events"),
        "concurrent_operations_max": _metric(None, "requires a sweep run"),
        "response_time_efficiency": _metric(None, "requires a baseline run"),
        "prediction_accuracy_pct": {k: _metric(v, "no forecasts scored")
                                    for k, v in pred.items()},
    }


def report_from_run_dir(run_dir, pack: ScenarioPack | None = None) -> dict:
    """Recompute the report from persisted artifacts (replay path)."""
    run_dir = Path(run_dir)
    log = [json.loads(line) for line in
           (run_dir / "events.jsonl").read_text().splitlines()]
    netstats = json.loads((run_dir / "netstats.json").read_text())
    meta = json.loads((run_dir / "meta.json").read_text())
    if pack is None:
        pack = load_pack(run_dir / "pack.jsonl")
    return compute_report(log, pack, netstats, meta["mode"], meta["policy"])


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------

TABLE_ROWS = [
    ("Response time", "response_time_min", "m"),
    ("Decision Latency", "decision_latency_mean_s", "s"),
    ("Alert Generation", "alert_generation_s", "s"),
    ("Situation Assessment", "situation_assessment_pct", "%"),
    ("Resource Allocation", "resource_distribution_pct", "%"),
    ("Accuracy", "overall_accuracy_pct", "%"),
    ("False Alarm rate", "false_alarm_pct", "%"),
    ("CPU Utilization", "cpu_utilization_pct", "%"),
    ("Memory Usage", "memory_usage_gb", "GB"),
    ("Network Bandwidth", "network_bandwidth_mbps", "Mbs"),
    ("System Availability", "system_availability_pct", "%"),
    ("Recovery Time", "recovery_time_min", "m"),
    ("Concurrent Operations", "concurrent_operations_max", ""),
]

PREDICTION_ROWS = [
    ("Flood Prediction", Category.FLOOD.value),
    ("Hurricane Prediction", Category.HURRICANE.value),
    ("Wildfire Prediction", Category.WILDFIRE.value),
    ("Storm Prediction", Category.SEVERE_STORM.value),
]


def _fmt(metric: dict, unit: str) -> str:
    v = metric.get("value")
    if v is None:
        return "n/a"
    if unit == "":
        return f"{v:g}"
    return f"{v:.1f} {unit}"


def render_table(reports: dict[str, dict]) -> str:
    """Fixed-width comparison table; columns follow the given report order."""
    names = list(reports)
    width = max(22, *(len(n) + 2 for n in names))
    header = "Performance Metric".ljust(26) + "".join(n.ljust(width) for n in names)
    lines = [header, "-" * len(header)]
    for label, key, unit in TABLE_ROWS:
        row = label.ljust(26)
        for n in names:
            row += _fmt(reports[n][key], unit).ljust(width)
        lines.append(row)
    for label, cat in PREDICTION_ROWS:
        row = label.ljust(26)
        for n in names:
            row += _fmt(reports[n]["prediction_accuracy_pct"][cat], "%").ljust(width)
        lines.append(row)
    eff = [r.get("response_time_efficiency", {}).get("value") for r in reports.values()]
    if any(v is not None for v in eff):
        row = "RT Efficiency".ljust(26)
        for v in eff:
            row += (f"{v:.2f}" if v is not None else "n/a").ljust(width)
        lines.append(row)
    return "\n".join(lines)
