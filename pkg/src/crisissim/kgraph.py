"""Property-graph knowledge base for operational state and feedback history.

Single-process store: nodes are typed (incident, resource, decision, outcome,
feedback, domain fact) with scalar properties; edges are (src, dst, label)
unique. The engine is the sole writer during a run; reads are unrestricted.
Snapshots are line-delimited records, nodes before edges, and round-trip to
an identical graph.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

__all__ = ["NodeKind", "Node", "Edge", "KnowledgeGraph",
           "ReferentialError", "NotFoundError"]


class ReferentialError(ValueError):
    pass


class NotFoundError(KeyError):
    pass


class NodeKind(str, Enum):
    INCIDENT = "Incident"
    RESOURCE = "Resource"
    DECISION = "Decision"
    OUTCOME = "Outcome"
    FEEDBACK = "Feedback"
    DOMAIN_FACT = "DomainFact"


_SCALARS = (str, int, float, bool, type(None))


def _check_props(props: dict) -> dict:
    for k, v in props.items():
        if not isinstance(v, _SCALARS):
            raise ValueError(f"prop {k!r} is not a scalar: {type(v).__name__}")
    return dict(props)


@dataclass
class Node:
    node_id: str
    kind: NodeKind
    props: dict = field(default_factory=dict)


@dataclass
class Edge:
    src: str
    dst: str
    label: str
    props: dict = field(default_factory=dict)


class KnowledgeGraph:
    def __init__(self):
        self._nodes: dict[str, Node] = {}
        self._edges: dict[tuple[str, str, str], Edge] = {}
        self._out: dict[str, set[tuple[str, str, str]]] = {}
        self._in: dict[str, set[tuple[str, str, str]]] = {}
        self._feedback_seq = 0

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    def upsert_node(self, node_id: str, kind: NodeKind, props: dict | None = None) -> str:
        """Insert or replace a node's props; the kind is immutable."""
        kind = NodeKind(kind)
        props = _check_props(props or {})
        existing = self._nodes.get(node_id)
        if existing is not None:
            if existing.kind != kind:
                raise ValueError(
                    f"node {node_id!r} already exists with kind {existing.kind.value}")
            existing.props = props
        else:
            self._nodes[node_id] = Node(node_id, kind, props)
            self._out[node_id] = set()
            self._in[node_id] = set()
        return node_id

    def get_node(self, node_id: str) -> Node:
        node = self._nodes.get(node_id)
        if node is None:
            raise NotFoundError(node_id)
        return node

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def add_edge(self, src: str, dst: str, label: str, props: dict | None = None) -> None:
        """Insert an edge; (src, dst, label) is unique, re-adding updates props."""
        if src not in self._nodes or dst not in self._nodes:
            raise ReferentialError(f"edge {src!r}-[{label}]->{dst!r} has a dangling endpoint")
        key = (src, dst, label)
        props = _check_props(props or {})
        if key in self._edges:
            self._edges[key].props = props
        else:
            self._edges[key] = Edge(src, dst, label, props)
            self._out[src].add(key)
            self._in[dst].add(key)

    def get_edge(self, src: str, dst: str, label: str) -> Edge:
        edge = self._edges.get((src, dst, label))
        if edge is None:
            raise NotFoundError((src, dst, label))
        return edge

    def neighbors(self, node_id: str, label: str | None = None,
                  direction: str = "out") -> list[Node]:
        """Adjacent nodes in ascending node_id order."""
        if node_id not in self._nodes:
            raise NotFoundError(node_id)
        if direction not in ("out", "in", "both"):
            raise ValueError(f"bad direction {direction!r}")
        keys: set[tuple[str, str, str]] = set()
        if direction in ("out", "both"):
            keys |= self._out[node_id]
        if direction in ("in", "both"):
            keys |= self._in[node_id]
        ids = set()
        for src, dst, lbl in keys:
            if label is not None and lbl != label:
                continue
            ids.add(dst if src == node_id else src)
        return [self._nodes[i] for i in sorted(ids)]

    def edges_of(self, node_id: str, direction: str = "out") -> list[Edge]:
        if node_id not in self._nodes:
            raise NotFoundError(node_id)
        keys = self._out[node_id] if direction == "out" else self._in[node_id]
        return [self._edges[k] for k in sorted(keys)]

    # -- feedback -------------------------------------------------------------

    VERDICT_EDGE = {"Approved": "APPROVED", "Overridden": "OVERRODE",
                    "Modified": "MODIFIED"}

    def record_feedback(self, decision_id: str, verdict: str,
                        replacement: int | None = None,
                        author: str = "operator") -> str:
        """Attach a feedback node to a decision; returns the feedback node id."""
        if verdict not in self.VERDICT_EDGE:
            raise ValueError(f"bad verdict {verdict!r}")
        decision = self.get_node(decision_id)
        if decision.kind != NodeKind.DECISION:
            raise ValueError(f"{decision_id!r} is not a decision node")
        self._feedback_seq += 1
        fb_id = f"fb{self._feedback_seq:06d}"
        props = {"verdict": verdict, "author": author, "seq": self._feedback_seq}
        if replacement is not None:
            props["replacement_action"] = int(replacement)
        self.upsert_node(fb_id, NodeKind.FEEDBACK, props)
        self.add_edge(fb_id, decision_id, self.VERDICT_EDGE[verdict])
        return fb_id

    def feedback_for(self, decision_id: str) -> list[Node]:
        """Feedback nodes attached to a decision, in insertion order."""
        self.get_node(decision_id)
        fbs = [self._nodes[src] for (src, dst, lbl) in self._in[decision_id]
               if self._nodes[src].kind == NodeKind.FEEDBACK]
        return sorted(fbs, key=lambda n: n.props.get("seq", 0))

    # -- persistence ----------------------------------------------------------

    def snapshot(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for node_id in sorted(self._nodes):
                n = self._nodes[node_id]
                fh.write(json.dumps(
                    {"rec": "node", "id": n.node_id, "kind": n.kind.value,
                     "props": n.props}, sort_keys=True) + "\n")
            for key in sorted(self._edges):
                e = self._edges[key]
                fh.write(json.dumps(
                    {"rec": "edge", "src": e.src, "dst": e.dst,
                     "label": e.label, "props": e.props}, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "KnowledgeGraph":
        g = cls()
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                rec = json.loads(line)
                if rec["rec"] == "node":
                    g.upsert_node(rec["id"], NodeKind(rec["kind"]), rec["props"])
                    if rec["kind"] == NodeKind.FEEDBACK.value:
                        g._feedback_seq = max(g._feedback_seq,
                                              int(rec["props"].get("seq", 0)))
                else:
                    g.add_edge(rec["src"], rec["dst"], rec["label"], rec["props"])
        return g
