from __future__ import annotations

import numpy as np
import pytest

from crisissim.kgraph import (
    KnowledgeGraph,
    NodeKind,
    NotFoundError,
    ReferentialError,
)


class TestUpsertAndEdges:
    def test_upsert_twice_second_props_win(self):
        g = KnowledgeGraph()
        g.upsert_node("i1", NodeKind.INCIDENT, {"sev": 4})
        g.upsert_node("i1", NodeKind.INCIDENT, {"sev": 7})
        assert len(g) == 1
        assert g.get_node("i1").props == {"sev": 7}

    def test_kind_is_immutable(self):
        g = KnowledgeGraph()
        g.upsert_node("x", NodeKind.INCIDENT)
        with pytest.raises(ValueError):
            g.upsert_node("x", NodeKind.RESOURCE)

    def test_edge_to_missing_node_is_referential_error(self):
        g = KnowledgeGraph()
        g.upsert_node("a", NodeKind.INCIDENT)
        with pytest.raises(ReferentialError):
            g.add_edge("a", "ghost", "ALLOCATED_TO")

    def test_random_upserts_match_shadow_bookkeeping(self):
        # oracle: plain dict/set bookkeeping alongside the graph
        rng = np.random.default_rng(9)
        g = KnowledgeGraph()
        shadow_nodes: dict[str, dict] = {}
        shadow_edges: set[tuple[str, str, str]] = set()
        for step in range(100):
            if rng.random() < 0.6 or len(shadow_nodes) < 2:
                nid = f"n{int(rng.integers(0, 30))}"
                props = {"v": int(rng.integers(100))}
                if nid in shadow_nodes:
                    g.upsert_node(nid, NodeKind.DOMAIN_FACT, props)
                else:
                    g.upsert_node(nid, NodeKind.DOMAIN_FACT, props)
                shadow_nodes[nid] = props
            else:
                ids = sorted(shadow_nodes)
                src = ids[int(rng.integers(len(ids)))]
                dst = ids[int(rng.integers(len(ids)))]
                label = f"L{int(rng.integers(3))}"
                g.add_edge(src, dst, label)
                shadow_edges.add((src, dst, label))
        assert len(g) == len(shadow_nodes)
        assert g.edge_count == len(shadow_edges)
        for nid, props in shadow_nodes.items():
            assert g.get_node(nid).props == props


class TestNeighbors:
    def test_isolated_node_empty(self):
        g = KnowledgeGraph()
        g.upsert_node("solo", NodeKind.RESOURCE)
        assert g.neighbors("solo") == []

    def test_star_graph(self):
        g = KnowledgeGraph()
        g.upsert_node("hub", NodeKind.DECISION)
        for i in range(5):
            g.upsert_node(f"r{i}", NodeKind.RESOURCE)
            g.add_edge("hub", f"r{i}", "ALLOCATED_TO")
        out = g.neighbors("hub", label="ALLOCATED_TO", direction="out")
        assert [n.node_id for n in out] == [f"r{i}" for i in range(5)]

    def test_unknown_node_not_found(self):
        with pytest.raises(NotFoundError):
            KnowledgeGraph().neighbors("nope")

    def test_filtered_query_matches_linear_scan(self):
        rng = np.random.default_rng(21)
        g = KnowledgeGraph()
        n = 15
        for i in range(n):
            g.upsert_node(f"n{i:02d}", NodeKind.DOMAIN_FACT)
        edges = set()
        for _ in range(60):
            s, d = (int(x) for x in rng.integers(0, n, size=2))
            label = f"L{int(rng.integers(2))}"
            g.add_edge(f"n{s:02d}", f"n{d:02d}", label)
            edges.add((f"n{s:02d}", f"n{d:02d}", label))
        for node in (f"n{i:02d}" for i in range(n)):
            for label in (None, "L0", "L1"):
                for direction in ("out", "in", "both"):
                    expect = set()
                    for s, d, l in edges:
                        if label is not None and l != label:
                            continue
                        if direction in ("out", "both") and s == node:
                            expect.add(d)
                        if direction in ("in", "both") and d == node:
                            expect.add(s)
                    got = [x.node_id for x in g.neighbors(node, label, direction)]
                    assert got == sorted(expect)


class TestFeedback:
    def _graph_with_decision(self):
        g = KnowledgeGraph()
        g.upsert_node("inc1", NodeKind.INCIDENT)
        g.upsert_node("d1", NodeKind.DECISION, {"action": 3})
        g.add_edge("d1", "inc1", "TARGETS")
        return g

    def test_approve_creates_feedback_node_and_edge(self):
        g = self._graph_with_decision()
        fb = g.record_feedback("d1", "Approved", author="op1")
        node = g.get_node(fb)
        assert node.kind == NodeKind.FEEDBACK
        assert g.get_edge(fb, "d1", "APPROVED").label == "APPROVED"

    def test_override_stores_replacement(self):
        g = self._graph_with_decision()
        fb = g.record_feedback("d1", "Overridden", replacement=7, author="op1")
        assert g.get_node(fb).props["replacement_action"] == 7
        assert g.get_edge(fb, "d1", "OVERRODE") is not None

    def test_unknown_decision_not_found(self):
        g = KnowledgeGraph()
        with pytest.raises(NotFoundError):
            g.record_feedback("ghost", "Approved")

    def test_mixed_verdicts_returned_in_insertion_order(self):
        g = self._graph_with_decision()
        verdicts = ["Approved", "Overridden", "Modified", "Approved", "Overridden",
                    "Modified", "Approved", "Approved", "Overridden", "Modified"]
        ids = [g.record_feedback("d1", v, replacement=1 if v != "Approved" else None)
               for v in verdicts]
        got = g.feedback_for("d1")
        assert [n.node_id for n in got] == ids
        assert [n.props["verdict"] for n in got] == verdicts


class TestSnapshot:
    def test_roundtrip_isomorphic(self, tmp_path):
        rng = np.random.default_rng(4)
        g = KnowledgeGraph()
        kinds = list(NodeKind)
        for i in range(25):
            g.upsert_node(f"n{i:02d}", kinds[i % len(kinds)],
                          {"num": float(i), "name": f"x{i}", "flag": bool(i % 2)})
        for _ in range(40):
            s, d = (int(x) for x in rng.integers(0, 25, size=2))
            g.add_edge(f"n{s:02d}", f"n{d:02d}", f"L{int(rng.integers(3))}",
                       {"w": int(rng.integers(10))})
        path = tmp_path / "graph.jsonl"
        g.snapshot(path)
        g2 = KnowledgeGraph.load(path)
        assert len(g2) == len(g) and g2.edge_count == g.edge_count
        path2 = tmp_path / "graph2.jsonl"
        g2.snapshot(path2)
        assert path.read_bytes() == path2.read_bytes()

    def test_feedback_seq_survives_reload(self, tmp_path):
        g = KnowledgeGraph()
        g.upsert_node("d1", NodeKind.DECISION)
        g.record_feedback("d1", "Approved")
        path = tmp_path / "g.jsonl"
        g.snapshot(path)
        g2 = KnowledgeGraph.load(path)
        fb2 = g2.record_feedback("d1", "Modified", replacement=2)
        assert fb2 == "fb000002"
