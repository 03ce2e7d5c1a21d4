"""Undirected provenance graph construction and export.

The dissimilarity matrix is complete, so a minimum spanning tree always
exists; Kruskal with deterministic tie-breaking picks the k-1 cheapest
consistent edges. Edges are undirected throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal

from .dissim import DissimilarityMatrix
from .errors import InvalidConfigError, InvalidInputError


def _canon(a: str, b: str):
    return (a, b) if a <= b else (b, a)


@dataclass
class ProvenanceGraph:
    nodes: list
    edges: list
    weights: dict = field(default_factory=dict)

    def __post_init__(self):
        node_set = set(self.nodes)
        if len(node_set) != len(self.nodes):
            raise InvalidInputError("duplicate node ids")
        canon = []
        seen = set()
        for a, b in self.edges:
            if a == b:
                raise InvalidInputError(f"self-loop on {a!r}")
            if a not in node_set or b not in node_set:
                raise InvalidInputError(f"edge ({a}, {b}) references unknown node")
            e = _canon(a, b)
            if e in seen:
                raise InvalidInputError(f"duplicate edge {e}")
            seen.add(e)
            canon.append(e)
        self.edges = canon
        self.weights = {_canon(*e): float(w) for e, w in self.weights.items()}
        for e in self.weights:
            if e not in seen:
                raise InvalidInputError(f"weight for unknown edge {e}")

    def edge_set(self) -> set:
        return set(self.edges)

    def is_spanning_tree(self) -> bool:
        if len(self.edges) != len(self.nodes) - 1:
            return False
        parent = {n: n for n in self.nodes}

        def find(x):
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        for a, b in self.edges:
            ra, rb = find(a), find(b)
            if ra == rb:
                return False
            parent[ra] = rb
        return True

    def total_weight(self) -> float:
        return sum(self.weights.get(e, 0.0) for e in self.edges)


class _DisjointSet:
    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.rank[ra] < self.rank[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        if self.rank[ra] == self.rank[rb]:
            self.rank[ra] += 1
        return True


def kruskal_spanning_tree(matrix: DissimilarityMatrix) -> ProvenanceGraph:
    """Minimum spanning tree of the complete dissimilarity graph.

    Equal-weight edges are taken in (weight, min index, max index) order so
    the result is deterministic.
    """
    k = len(matrix.image_ids)
    if k < 2:
        raise InvalidInputError("need at least 2 images to build a graph")
    candidates = sorted(
        (float(matrix.values[i, j]), i, j) for i in range(k) for j in range(i + 1, k)
    )
    dsu = _DisjointSet(k)
    edges = []
    weights = {}
    for w, i, j in candidates:
        if dsu.union(i, j):
            a, b = matrix.image_ids[i], matrix.image_ids[j]
            edges.append((a, b))
            weights[_canon(a, b)] = w
            if len(edges) == k - 1:
                break
    return ProvenanceGraph(nodes=list(matrix.image_ids), edges=edges, weights=weights)


def graph_from_journal(journal) -> ProvenanceGraph:
    """Unweighted ground-truth view of a journal for scoring."""
    return ProvenanceGraph(nodes=list(journal.nodes), edges=list(journal.edges))


def graph_to_dict(g: ProvenanceGraph) -> dict:
    edges = []
    for a, b in sorted(g.edges):
        entry = {"a": a, "b": b}
        if (a, b) in g.weights:
            entry["w"] = g.weights[(a, b)]
        edges.append(entry)
    return {"nodes": sorted(g.nodes), "edges": edges}


def graph_from_dict(d: dict) -> ProvenanceGraph:
    edges = [(e["a"], e["b"]) for e in d["edges"]]
    weights = {(e["a"], e["b"]): e["w"] for e in d["edges"] if "w" in e}
    return ProvenanceGraph(nodes=list(d["nodes"]), edges=edges, weights=weights)


def _format_weight(w: float) -> str:
    # decimal string rounding, so 0.12345 renders as "0.1235"
    return str(Decimal(str(w)).quantize(Decimal("0.0001"), rounding=ROUND_HALF_UP))


def graph_to_dot(g: ProvenanceGraph) -> str:
    lines = ["graph provenance {"]
    for node in sorted(g.nodes):
        lines.append(f'  "{node}";')
    for a, b in sorted(g.edges):
        if (a, b) in g.weights:
            lines.append(f'  "{a}" -- "{b}" [label="{_format_weight(g.weights[(a, b)])}"];')
        else:
            lines.append(f'  "{a}" -- "{b}";')
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_graph(g: ProvenanceGraph, format: str, path) -> None:
    if format == "json":
        text = json.dumps(graph_to_dict(g), sort_keys=True) + "\n"
    elif format == "dot":
        text = graph_to_dot(g)
    else:
        raise InvalidConfigError(f"unknown export format {format!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write(text)


def load_graph(path) -> ProvenanceGraph:
    with open(path, "r", encoding="utf-8") as f:
        return graph_from_dict(json.load(f))
