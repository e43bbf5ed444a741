"""Network infrastructure model: nodes, links, slices, failures, rerouting.

The model is a fluid-flow discrete-event simulation. Messages traverse a
minimum-latency path hop by hop; on each link they are serialized at the
link's instantaneous rate, which honors slice guarantees: every backlogged
slice gets at least its guaranteed capacity fraction, and spare capacity goes
to the highest-priority backlogged slice. Within a slice, flows serialize in
FIFO order.

Failures mark links/nodes down for a window. Routing reacts with a detection
lag: the routing table is a *believed* copy of the topology that syncs to the
actual state one detection interval after each change, so traffic routed onto
a failed link during that lag is lost (and recovered by bus-level retry,
which is outside this module). Availability, by contrast, is pure graph
connectivity of the actual up-state.

All state transitions happen at event timestamps on one logical thread; the
engine owns the clock and drives :meth:`NetworkSim.advance`.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "NodeSpec",
    "LinkSpec",
    "SliceSpec",
    "Topology",
    "NetConfig",
    "Transmission",
    "NetStats",
    "route",
    "NetworkSim",
    "default_topology",
    "MISSION_SLICE",
    "BULK_SLICE",
]

MISSION_SLICE = "mission_critical"
BULK_SLICE = "bulk"


@dataclass(frozen=True)
class NodeSpec:
    node_id: str
    role: str  # "edge" | "central"


@dataclass(frozen=True)
class LinkSpec:
    a: str
    b: str
    base_latency_ms: float
    bandwidth_mbps: float
    up: bool = True

    def key(self) -> tuple[str, str]:
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)


@dataclass(frozen=True)
class SliceSpec:
    name: str
    priority: int                 # lower rank is served first
    guaranteed_fraction: float


@dataclass(frozen=True)
class Topology:
    nodes: tuple[NodeSpec, ...]
    links: tuple[LinkSpec, ...]
    slices: tuple[SliceSpec, ...]

    def __post_init__(self):
        ids = [n.node_id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate node ids")
        id_set = set(ids)
        for l in self.links:
            if l.a not in id_set or l.b not in id_set:
                raise ValueError(f"link {l.a}-{l.b} references unknown node")
            if l.bandwidth_mbps <= 0 or l.base_latency_ms < 0:
                raise ValueError(f"link {l.a}-{l.b} has invalid parameters")
        if sum(s.guaranteed_fraction for s in self.slices) > 1.0 + 1e-12:
            raise ValueError("slice guarantees exceed link capacity")

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.node_id == node_id:
                return n
        raise KeyError(node_id)

    def slice(self, name: str) -> SliceSpec:
        for s in self.slices:
            if s.name == name:
                return s
        raise KeyError(name)

    def central_id(self) -> str:
        for n in self.nodes:
            if n.role == "central":
                return n.node_id
        raise ValueError("topology has no central node")

    @staticmethod
    def from_dict(d: dict) -> "Topology":
        return Topology(
            nodes=tuple(NodeSpec(**n) for n in d["nodes"]),
            links=tuple(LinkSpec(**l) for l in d["links"]),
            slices=tuple(SliceSpec(**s) for s in d["slices"]),
        )


def default_topology() -> Topology:
    """3 edge nodes and 1 central node under the documented defaults.

    Edge-central links run at 10 ms / 100 Mb/s, edge-edge at 5 ms / 100 Mb/s
    (so every edge has a two-hop detour when its direct central link fails);
    the mission-critical slice is guaranteed 30% of any contended link.
    """
    edges = [NodeSpec(f"edge{i}", "edge") for i in (1, 2, 3)]
    central = NodeSpec("central", "central")
    links = [LinkSpec(e.node_id, "central", 10.0, 100.0) for e in edges]
    links += [
        LinkSpec("edge1", "edge2", 5.0, 100.0),
        LinkSpec("edge2", "edge3", 5.0, 100.0),
        LinkSpec("edge1", "edge3", 5.0, 100.0),
    ]
    slices = (
        SliceSpec(MISSION_SLICE, priority=0, guaranteed_fraction=0.30),
        SliceSpec(BULK_SLICE, priority=1, guaranteed_fraction=0.0),
    )
    return Topology(nodes=tuple(edges + [central]), links=tuple(links), slices=slices)


@dataclass(frozen=True)
class NetConfig:
    detection_interval_ms: float = 500.0
    jitter_sigma: float = 0.0     # lognormal latency multiplier; 0 disables
    jitter_seed: int = 0


@dataclass
class Transmission:
    msg_id: str
    src: str
    dst: str
    size_bytes: int
    slice: str
    enqueue_time: float
    deliver_time: float | None = None   # None while in flight or dropped
    dropped: bool = False
    drop_reason: str | None = None


@dataclass
class NetStats:
    offered: int
    delivered: int
    dropped: int
    bytes_offered: int
    bytes_delivered: int
    per_slice_bytes: dict[str, int]
    availability_fraction: float
    recovery_events: list[tuple[float, float]]
    window: tuple[float, float]

    def bandwidth_mbps(self) -> float:
        span_ms = self.window[1] - self.window[0]
        if span_ms <= 0:
            return 0.0
        return self.bytes_delivered * 8.0 / (span_ms / 1000.0) / 1e6


# ---------------------------------------------------------------------------
# routing
# ---------------------------------------------------------------------------

def route(topology: Topology, src: str, dst: str,
          link_up=None, node_up=None) -> list[str] | None:
    """Minimum-latency path over up links, or None when unroutable.

    Ties in total latency break toward the lexicographically smaller node-id
    sequence. ``link_up``/``node_up`` optionally override the static up flags
    (mappings from link key / node id to bool).
    """
    ids = {n.node_id for n in topology.nodes}
    if src not in ids or dst not in ids:
        raise KeyError(f"unknown node in route({src!r}, {dst!r})")

    def l_up(link: LinkSpec) -> bool:
        if link_up is not None and link.key() in link_up:
            return link_up[link.key()]
        return link.up

    def n_up(node_id: str) -> bool:
        if node_up is not None and node_id in node_up:
            return node_up[node_id]
        return True

    if not n_up(src) or not n_up(dst):
        return None
    if src == dst:
        return [src]

    adj: dict[str, list[tuple[str, float]]] = {n.node_id: [] for n in topology.nodes}
    for link in topology.links:
        if not l_up(link) or not n_up(link.a) or not n_up(link.b):
            continue
        adj[link.a].append((link.b, link.base_latency_ms))
        adj[link.b].append((link.a, link.base_latency_ms))

    # heap entries carry the path; (dist, path) pop order makes equal-cost
    # ties resolve to the lexicographically smallest node sequence
    heap: list[tuple[float, tuple[str, ...]]] = [(0.0, (src,))]
    settled: set[str] = set()
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in settled:
            continue
        settled.add(node)
        if node == dst:
            return list(path)
        for nbr, lat in sorted(adj[node]):
            if nbr not in settled:
                heapq.heappush(heap, (dist + lat, path + (nbr,)))
    return None


def path_latency_ms(topology: Topology, path: list[str]) -> float:
    total = 0.0
    by_key = {l.key(): l for l in topology.links}
    for a, b in zip(path, path[1:]):
        total += by_key[(a, b) if a <= b else (b, a)].base_latency_ms
    return total


# ---------------------------------------------------------------------------
# fluid link simulation
# ---------------------------------------------------------------------------

@dataclass
class _Flow:
    transfer_id: int
    slice: str
    remaining_bits: float
    fifo_seq: int
    rate: float = 0.0             # bits per ms
    last_update: float = 0.0
    version: int = 0


@dataclass
class _Transfer:
    msg: Transmission
    path: list[str]
    hop: int = 0


class NetworkSim:
    """Event-driven network state shared by one engine run."""

    def __init__(self, topology: Topology, config: NetConfig = NetConfig(),
                 start_ms: float = 0.0):
        self.topology = topology
        self.config = config
        self.now = start_ms
        self._rng = np.random.default_rng(config.jitter_seed)

        self._link_by_key = {l.key(): l for l in topology.links}
        self._actual_link_up = {k: l.up for k, l in self._link_by_key.items()}
        self._actual_node_up = {n.node_id: True for n in topology.nodes}
        self._believed_link_up = dict(self._actual_link_up)
        self._believed_node_up = dict(self._actual_node_up)

        self._flows: dict[tuple[str, str], list[_Flow]] = {k: [] for k in self._link_by_key}
        self._transfers: dict[int, _Transfer] = {}
        self._next_transfer_id = 0
        self._fifo_seq = 0

        self._heap: list[tuple[float, int, str, tuple]] = []
        self._seq = 0

        self._down_until: dict[object, float] = {}

        self.log: list[Transmission] = []
        self._deliveries_ready: list[Transmission] = []

        # availability bookkeeping (actual connectivity)
        self._conn_last_t = start_ms
        self._conn_time = 0.0
        self._connected = self._actually_connected()

        # service outage episodes (believed routing actually working)
        self._service_ok = True
        self._outage_start: float | None = None
        self.recovery_events: list[tuple[float, float]] = []

    # -- event plumbing ----------------------------------------------------

    def _push(self, t: float, kind: str, data: tuple) -> None:
        heapq.heappush(self._heap, (t, self._seq, kind, data))
        self._seq += 1

    def next_event_time(self) -> float | None:
        return self._heap[0][0] if self._heap else None

    def advance(self, t_ms: float) -> list[Transmission]:
        """Process internal events up to and including t_ms; return deliveries."""
        while self._heap and self._heap[0][0] <= t_ms + 1e-9:
            t, _, kind, data = heapq.heappop(self._heap)
            self.now = max(self.now, t)
            getattr(self, f"_ev_{kind}")(t, *data)
        self.now = max(self.now, t_ms)
        out = self._deliveries_ready
        self._deliveries_ready = []
        return out

    # -- transmit / hop handling -------------------------------------------

    def transmit(self, msg_id: str, src: str, dst: str, size_bytes: int,
                 slice_name: str, now_ms: float) -> Transmission:
        """Enqueue a message; enqueue times at or beyond the current clock are
        honored by starting the transfer at its own timestamp, so callers may
        hand in transmissions dated slightly in the future."""
        self.topology.slice(slice_name)  # validates
        msg = Transmission(msg_id, src, dst, int(size_bytes), slice_name, now_ms)
        self.log.append(msg)
        tid = self._next_transfer_id
        self._next_transfer_id += 1
        self._transfers[tid] = _Transfer(msg, [])
        if now_ms > self.now:
            self._push(now_ms, "start", (tid,))
        else:
            self._ev_start(self.now, tid)
        return msg

    def _ev_start(self, t: float, tid: int) -> None:
        tr = self._transfers.get(tid)
        if tr is None:
            return
        msg = tr.msg
        path = route(self.topology, msg.src, msg.dst,
                     link_up=self._believed_link_up, node_up=self._believed_node_up)
        if path is None:
            self._drop_transfer(tid, "unroutable")
            return
        tr.path = path
        if len(path) == 1:
            msg.deliver_time = t
            self._deliveries_ready.append(msg)
            del self._transfers[tid]
        else:
            self._enter_link(tid, t)

    def _enter_link(self, tid: int, t: float) -> None:
        tr = self._transfers[tid]
        a, b = tr.path[tr.hop], tr.path[tr.hop + 1]
        key = (a, b) if a <= b else (b, a)
        if not self._actual_link_up[key] or not self._actual_node_up[a] \
                or not self._actual_node_up[b]:
            self._drop_transfer(tid, "link_down")
            return
        flow = _Flow(tid, tr.msg.slice, tr.msg.size_bytes * 8.0,
                     self._fifo_seq, last_update=t)
        self._fifo_seq += 1
        self._flows[key].append(flow)
        self._recompute_link(key, t)

    def _drop_transfer(self, tid: int, reason: str) -> None:
        tr = self._transfers.pop(tid)
        tr.msg.dropped = True
        tr.msg.drop_reason = reason

    def _link_capacity(self, key: tuple[str, str]) -> float:
        return self._link_by_key[key].bandwidth_mbps * 1000.0  # bits per ms

    def _recompute_link(self, key: tuple[str, str], t: float) -> None:
        """Settle progress at t, reassign rates, reschedule completions."""
        flows = self._flows[key]
        for f in flows:
            dt = max(0.0, t - f.last_update)
            f.remaining_bits = max(0.0, f.remaining_bits - f.rate * dt)
            f.last_update = t
            f.version += 1
        if not flows:
            return
        cap = self._link_capacity(key)
        backlogged = sorted({f.slice for f in flows},
                            key=lambda s: (self.topology.slice(s).priority, s))
        guaranteed = {s: self.topology.slice(s).guaranteed_fraction * cap
                      for s in backlogged}
        leftover = cap - sum(guaranteed.values())
        slice_rate = dict(guaranteed)
        slice_rate[backlogged[0]] += max(0.0, leftover)
        # head-of-line flow per slice takes the whole slice rate
        heads: dict[str, _Flow] = {}
        for f in sorted(flows, key=lambda f: f.fifo_seq):
            heads.setdefault(f.slice, f)
        for f in flows:
            f.rate = slice_rate[f.slice] if heads.get(f.slice) is f else 0.0
            if f.rate > 0.0 or f.remaining_bits <= 0.0:
                done = t if f.remaining_bits <= 0.0 else t + f.remaining_bits / f.rate
                self._push(done, "hop_done", (key, f.transfer_id, f.version))

    def _ev_hop_done(self, t: float, key: tuple[str, str], tid: int, version: int) -> None:
        flows = self._flows[key]
        flow = next((f for f in flows if f.transfer_id == tid), None)
        if flow is None or flow.version != version:
            return  # stale: flow was rescheduled or dropped
        flows.remove(flow)
        self._recompute_link(key, t)
        tr = self._transfers.get(tid)
        if tr is None:
            return
        latency = self._link_by_key[key].base_latency_ms
        if self.config.jitter_sigma > 0.0:
            latency *= float(self._rng.lognormal(0.0, self.config.jitter_sigma))
        self._push(t + latency, "hop_arrive", (tid,))

    def _ev_hop_arrive(self, t: float, tid: int) -> None:
        tr = self._transfers.get(tid)
        if tr is None:
            return
        tr.hop += 1
        if tr.hop == len(tr.path) - 1:
            tr.msg.deliver_time = t
            self._deliveries_ready.append(tr.msg)
            del self._transfers[tid]
        else:
            self._enter_link(tid, t)

    # -- failures ------------------------------------------------------------

    def inject_failure(self, target, at_ms: float, duration_ms: float) -> None:
        """Mark a link key or node id down for [at, at+duration); zero-length
        windows are ignored. Overlapping windows on one target merge."""
        if duration_ms <= 0:
            return
        if isinstance(target, (tuple, list)):
            target = tuple(sorted(target))
            if target not in self._link_by_key:
                raise KeyError(f"unknown link {target}")
        elif target not in self._actual_node_up:
            raise KeyError(f"unknown node {target}")
        self._push(at_ms, "fail_start", (target, at_ms + duration_ms))

    def _ev_fail_start(self, t: float, target, until: float) -> None:
        already_down = self._down_until.get(target, -math.inf) > t
        self._down_until[target] = max(self._down_until.get(target, -math.inf), until)
        self._push(self._down_until[target], "fail_end", (target,))
        if already_down:
            return
        self._set_actual(target, False, t)
        self._push(t + self.config.detection_interval_ms, "detect", ())

    def _ev_fail_end(self, t: float, target) -> None:
        if self._down_until.get(target, -math.inf) > t + 1e-9:
            return  # merged window extended past this restore
        self._set_actual(target, True, t)
        self._push(t + self.config.detection_interval_ms, "detect", ())

    def _ev_detect(self, t: float) -> None:
        self._believed_link_up = dict(self._actual_link_up)
        self._believed_node_up = dict(self._actual_node_up)
        self._update_service(t)

    def _set_actual(self, target, up: bool, t: float) -> None:
        self._account_connectivity(t)
        if isinstance(target, tuple):
            self._actual_link_up[target] = up
            if not up:
                for f in list(self._flows[target]):
                    self._flows[target].remove(f)
                    f.version += 1
                    if f.transfer_id in self._transfers:
                        self._drop_transfer(f.transfer_id, "link_down")
        else:
            self._actual_node_up[target] = up
            if not up:
                for key in self._link_by_key:
                    if target in key:
                        for f in list(self._flows[key]):
                            self._flows[key].remove(f)
                            f.version += 1
                            if f.transfer_id in self._transfers:
                                self._drop_transfer(f.transfer_id, "node_down")
        self._connected = self._actually_connected()
        self._update_service(t)

    # -- availability / service tracking -------------------------------------

    def _actually_connected(self) -> bool:
        central = self.topology.central_id()
        for n in self.topology.nodes:
            if n.role != "edge" or not self._actual_node_up[n.node_id]:
                continue
            p = route(self.topology, n.node_id, central,
                      link_up=self._actual_link_up, node_up=self._actual_node_up)
            if p is None:
                return False
        return True

    def _account_connectivity(self, t: float) -> None:
        if self._connected:
            self._conn_time += max(0.0, t - self._conn_last_t)
        self._conn_last_t = t

    def _service_now_ok(self) -> bool:
        """Believed routes exist for every live edge and are actually up."""
        central = self.topology.central_id()
        for n in self.topology.nodes:
            if n.role != "edge" or not self._actual_node_up[n.node_id]:
                continue
            p = route(self.topology, n.node_id, central,
                      link_up=self._believed_link_up, node_up=self._believed_node_up)
            if p is None:
                return False
            for a, b in zip(p, p[1:]):
                key = (a, b) if a <= b else (b, a)
                if not self._actual_link_up[key]:
                    return False
        return True

    def _update_service(self, t: float) -> None:
        ok = self._service_now_ok()
        if self._service_ok and not ok:
            self._outage_start = t
        elif not self._service_ok and ok:
            self.recovery_events.append((self._outage_start, t))
            self._outage_start = None
        self._service_ok = ok

    # -- stats ----------------------------------------------------------------

    def stats(self, window: tuple[float, float] | None = None) -> NetStats:
        if window is None:
            window = (0.0, self.now)
        t0, t1 = window
        self._account_connectivity(self.now)
        span = max(0.0, self.now - 0.0)
        avail = 1.0 if span == 0 else min(1.0, self._conn_time / span)

        offered = delivered = dropped = 0
        bo = bd = 0
        per_slice: dict[str, int] = {s.name: 0 for s in self.topology.slices}
        for m in self.log:
            if not (t0 <= m.enqueue_time <= t1):
                continue
            offered += 1
            bo += m.size_bytes
            if m.deliver_time is not None and m.deliver_time <= t1:
                delivered += 1
                bd += m.size_bytes
                per_slice[m.slice] += m.size_bytes
            elif m.dropped:
                dropped += 1
        return NetStats(
            offered=offered, delivered=delivered, dropped=dropped,
            bytes_offered=bo, bytes_delivered=bd, per_slice_bytes=per_slice,
            availability_fraction=avail,
            recovery_events=list(self.recovery_events),
            window=window,
        )
