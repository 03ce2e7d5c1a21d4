"""Graph-overlap scoring: vertex, edge, and combined F1 against ground truth.

All metrics treat edges as unordered pairs. The combined score (VEO) is the
F1 over the disjoint union of vertices and edges.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCaseError, InvalidInputError
from .provgraph import ProvenanceGraph, _canon


@dataclass(frozen=True)
class GraphScore:
    vo: float
    eo: float
    veo: float

    def __post_init__(self):
        for name, value in (("vo", self.vo), ("eo", self.eo), ("veo", self.veo)):
            if not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} must be in [0, 1], got {value}")


def _f1(n_common: int, n_cand: int, n_gt: int) -> float:
    if n_common == 0:
        return 0.0
    precision = n_common / n_cand
    recall = n_common / n_gt
    return 2 * precision * recall / (precision + recall)


def _edge_sets(gt: ProvenanceGraph, cand: ProvenanceGraph):
    return {_canon(*e) for e in gt.edges}, {_canon(*e) for e in cand.edges}


def vertex_overlap(gt: ProvenanceGraph, cand: ProvenanceGraph) -> float:
    if not gt.nodes:
        raise InvalidCaseError("ground-truth graph has no nodes")
    common = len(set(gt.nodes) & set(cand.nodes))
    if not cand.nodes:
        return 0.0
    return _f1(common, len(cand.nodes), len(gt.nodes))


def edge_overlap(gt: ProvenanceGraph, cand: ProvenanceGraph) -> float:
    if not gt.nodes:
        raise InvalidCaseError("ground-truth graph has no nodes")
    gt_edges, cand_edges = _edge_sets(gt, cand)
    if not gt_edges:
        # degenerate single-node journals: exact match scores 1
        return 1.0 if not cand_edges else 0.0
    if not cand_edges:
        return 0.0
    return _f1(len(gt_edges & cand_edges), len(cand_edges), len(gt_edges))


def vertex_edge_overlap(gt: ProvenanceGraph, cand: ProvenanceGraph) -> float:
    if not gt.nodes:
        raise InvalidCaseError("ground-truth graph has no nodes")
    gt_edges, cand_edges = _edge_sets(gt, cand)
    common = len(set(gt.nodes) & set(cand.nodes)) + len(gt_edges & cand_edges)
    n_cand = len(cand.nodes) + len(cand_edges)
    n_gt = len(gt.nodes) + len(gt_edges)
    if n_cand == 0:
        return 0.0
    return _f1(common, n_cand, n_gt)


def score_graph(gt: ProvenanceGraph, cand: ProvenanceGraph) -> GraphScore:
    return GraphScore(
        vo=vertex_overlap(gt, cand),
        eo=edge_overlap(gt, cand),
        veo=vertex_edge_overlap(gt, cand),
    )


def score_batch(cases):
    """Mean and population standard deviation of per-case scores.

    cases: list of (ground_truth, candidate) graph pairs. Returns
    (mean GraphScore, stddev GraphScore, per-case list in input order).
    """
    if not cases:
        raise InvalidInputError("no cases to score")
    scores = [score_graph(gt, cand) for gt, cand in cases]
    vo = np.array([s.vo for s in scores])
    eo = np.array([s.eo for s in scores])
    veo = np.array([s.veo for s in scores])
    mean = GraphScore(float(vo.mean()), float(eo.mean()), float(veo.mean()))
    std = GraphScore(float(vo.std()), float(eo.std()), float(veo.std()))
    return mean, std, scores


def write_scores_csv(rows, path) -> None:
    """rows: list of (case_id, GraphScore)."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["case_id", "vo", "eo", "veo"])
        for case_id, s in rows:
            writer.writerow([case_id, repr(s.vo), repr(s.eo), repr(s.veo)])


def summary_dict(mean: GraphScore, std: GraphScore, n_cases: int) -> dict:
    return {
        "means": {"vo": mean.vo, "eo": mean.eo, "veo": mean.veo},
        "stddevs": {"vo": std.vo, "eo": std.eo, "veo": std.veo},
        "n_cases": n_cases,
    }


def write_summary_json(mean: GraphScore, std: GraphScore, n_cases: int, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(summary_dict(mean, std, n_cases), f, sort_keys=True)
        f.write("\n")
