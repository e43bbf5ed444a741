"""Operator API: state snapshots, ordered event stream, override ingress.

The engine pushes immutable projection events (alerts, incident updates,
decision lifecycle, dispatches) into an append-only store as it executes;
every API response is derived purely from that store, so a client can never
observe state that contradicts the event log. The stream endpoint serves
server-sent events and resumes from any sequence number without gaps or
duplicates; overrides enter the engine through its serialized command queue
and the engine's verdict is returned synchronously.

Endpoints (JSON bodies):
    GET  /state                full view-model snapshot (latest seq included)
    GET  /stream?from_seq=N    SSE stream: id = seq, data = projection event
    POST /override             {decision_id, verdict, replacement?, author?}
                               -> {accepted, reason}
    GET  /health               {status, scenario_done}
"""

from __future__ import annotations

import json
import queue
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import parse_qs, urlparse

from .engine import Engine, OverrideDirective

__all__ = ["EventStore", "ApiServer", "build_state"]


class EventStore:
    """Append-only projection log with blocking reads past the tail."""

    def __init__(self):
        self._events: list[dict] = []
        self._cond = threading.Condition()
        self.closed = False

    def append(self, event: dict) -> None:
        with self._cond:
            self._events.append(event)
            self._cond.notify_all()

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()

    def snapshot(self) -> list[dict]:
        with self._cond:
            return list(self._events)

    def read_from(self, seq: int, timeout: float = 0.25) -> list[dict]:
        """Events with seq greater than the given one; blocks briefly at tail."""
        with self._cond:
            pending = [e for e in self._events if e["seq"] > seq]
            if pending or self.closed:
                return pending
            self._cond.wait(timeout)
            return [e for e in self._events if e["seq"] > seq]


def build_state(events: list[dict]) -> dict:
    """Fold the projection log into the operator view-model."""
    incidents: dict[str, dict] = {}
    decisions: dict[str, dict] = {}
    alerts: list[dict] = []
    t = 0.0
    done = False
    for e in events:
        t = max(t, e.get("t", 0.0))
        kind = e["kind"]
        if kind == "alert":
            alerts.append({"alert_id": e["alert_id"], "region": e["region"],
                           "predicted_class": e["predicted_class"],
                           "confidence": e["confidence"], "t": e["t"]})
        elif kind == "incident_update":
            incidents[e["incident_id"]] = {
                "incident_id": e["incident_id"], "region": e["region"],
                "severity": e["severity"], "unmet": e["unmet"],
                "status": e["status"], "updated_t": e["t"]}
        elif kind == "decision_issued":
            decisions[e["decision_id"]] = {
                "decision_id": e["decision_id"], "incident_id": e["incident_id"],
                "action": e["action"], "status": "Pending",
                "window_expires_ms": e["window_expires_ms"], "issued_t": e["t"]}
        elif kind == "decision_resolved":
            d = decisions.get(e["decision_id"])
            if d is not None:
                d["status"] = e["status"]
                d["executed_action"] = e["executed_action"]
        elif kind == "window_expiry":
            d = decisions.get(e["decision_id"])
            if d is not None and d["status"] == "Pending":
                d["status"] = "Expired"
        elif kind == "scenario_end":
            done = True
    last_seq = events[-1]["seq"] if events else 0
    return {
        "seq": last_seq,
        "sim_time_ms": t,
        "scenario_done": done,
        "incidents": sorted(incidents.values(), key=lambda i: i["incident_id"]),
        "pending_decisions": sorted(
            (d for d in decisions.values() if d["status"] == "Pending"),
            key=lambda d: d["decision_id"]),
        "decisions": sorted(decisions.values(), key=lambda d: d["decision_id"]),
        "alerts": alerts,
    }


class _Handler(BaseHTTPRequestHandler):
    server_version = "crisissim-gateway/0.1"
    protocol_version = "HTTP/1.1"

    # quiet: the default handler logs every request to stderr
    def log_message(self, fmt, *args):
        pass

    @property
    def store(self) -> EventStore:
        return self.server.store

    @property
    def engine(self) -> Engine:
        return self.server.engine

    def _json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self):
        url = urlparse(self.path)
        if url.path == "/state":
            self._json(200, build_state(self.store.snapshot()))
        elif url.path == "/health":
            self._json(200, {"status": "ok",
                             "scenario_done": self.store.closed})
        elif url.path == "/stream":
            qs = parse_qs(url.query)
            from_seq = int(qs.get("from_seq", ["0"])[0])
            self._stream(from_seq)
        else:
            self._json(404, {"error": "not_found", "path": url.path})

    def _stream(self, from_seq: int) -> None:
        self.send_response(200)
        self.send_header("Content-Type", "text/event-stream")
        self.send_header("Cache-Control", "no-cache")
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        seq = from_seq
        idle = 0
        try:
            while True:
                batch = self.store.read_from(seq)
                for e in batch:
                    seq = e["seq"]
                    data = json.dumps(e, sort_keys=True)
                    self.wfile.write(f"id: {seq}\ndata: {data}\n\n".encode())
                self.wfile.flush()
                if self.store.closed and not batch:
                    idle += 1
                    if idle >= 2:
                        self.wfile.write(b"event: end\ndata: {}\n\n")
                        self.wfile.flush()
                        return
        except (BrokenPipeError, ConnectionResetError):
            return

    def do_POST(self):
        url = urlparse(self.path)
        if url.path != "/override":
            self._json(404, {"error": "not_found", "path": url.path})
            return
        try:
            length = int(self.headers.get("Content-Length", "0"))
            payload = json.loads(self.rfile.read(length) or b"{}")
            directive = OverrideDirective(
                decision_id=str(payload["decision_id"]),
                verdict=str(payload["verdict"]),
                replacement=payload.get("replacement"),
                author=str(payload.get("author", "console")),
                _reply=queue.Queue(maxsize=1),
            )
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            self._json(400, {"error": "bad_request", "message": str(exc)})
            return
        if self.store.closed:
            self._json(409, {"accepted": False, "reason": "run_finished"})
            return
        self.engine.command_queue.put(directive)
        try:
            accepted, reason = directive._reply.get(timeout=10.0)
        except queue.Empty:
            self._json(504, {"accepted": False, "reason": "engine_timeout"})
            return
        self._json(200, {"accepted": accepted, "reason": reason})


class ApiServer:
    """HTTP server bound to one engine run."""

    def __init__(self, engine: Engine, host: str = "127.0.0.1", port: int = 0):
        self.store = EventStore()
        engine.observer = self.store.append
        self.engine = engine
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.daemon_threads = True
        self._httpd.store = self.store
        self._httpd.engine = engine
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever,
                                        daemon=True)
        self._thread.start()

    def mark_done(self) -> None:
        self.store.close()

    def stop(self) -> None:
        self.store.close()
        self._httpd.shutdown()
        self._httpd.server_close()
