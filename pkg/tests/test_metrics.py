import numpy as np
import pytest

from provtrace.errors import InvalidCaseError, InvalidInputError
from provtrace.metrics import (
    GraphScore,
    edge_overlap,
    score_batch,
    score_graph,
    summary_dict,
    vertex_edge_overlap,
    vertex_overlap,
    write_scores_csv,
)
from provtrace.provgraph import ProvenanceGraph


def graph(nodes, edges=()):
    return ProvenanceGraph(list(nodes), list(edges))


def chain(labels):
    return graph(labels, list(zip(labels, labels[1:])))


def f1(common, n_cand, n_gt):
    if common == 0:
        return 0.0
    p, r = common / n_cand, common / n_gt
    return 2 * p * r / (p + r)


def random_graph(rng, labels):
    n = int(rng.integers(1, len(labels) + 1))
    nodes = list(rng.choice(labels, size=n, replace=False))
    edges = []
    possible = [(a, b) for i, a in enumerate(nodes) for b in nodes[i + 1 :]]
    if possible:
        count = int(rng.integers(0, min(len(possible), 2 * n) + 1))
        picks = rng.choice(len(possible), size=count, replace=False)
        edges = [possible[i] for i in picks]
    return graph(nodes, edges)


class TestVertexOverlap:
    def test_identical(self):
        g = chain("abcde")
        assert vertex_overlap(g, g) == 1.0

    def test_disjoint(self):
        assert vertex_overlap(graph("abc"), graph("xyz")) == 0.0

    def test_two_extra_nodes(self):
        gt = graph(["1", "2", "3", "4", "5"])
        cand = graph(["1", "2", "3", "4", "5", "6", "7"])
        assert vertex_overlap(gt, cand) == pytest.approx(10 / 12)

    def test_empty_ground_truth_rejected(self):
        with pytest.raises(InvalidCaseError):
            vertex_overlap(graph([]), graph("ab"))


class TestEdgeOverlap:
    def test_identical_trees(self):
        g = chain("abcd")
        assert edge_overlap(g, g) == 1.0

    def test_half_shared(self):
        gt = graph("abcde", [("a", "b"), ("b", "c"), ("c", "d"), ("d", "e")])
        cand = graph("abcde", [("a", "b"), ("b", "c"), ("a", "d"), ("a", "e")])
        assert edge_overlap(gt, cand) == pytest.approx(0.5)

    def test_orientation_free(self):
        gt = graph("ab", [("a", "b")])
        cand = graph("ab", [("b", "a")])
        assert edge_overlap(gt, cand) == 1.0

    def test_zero_edge_ground_truth(self):
        assert edge_overlap(graph("a"), graph("a")) == 1.0
        assert edge_overlap(graph("a"), graph("ab", [("a", "b")])) == 0.0

    def test_empty_candidate_edges(self):
        assert edge_overlap(chain("abc"), graph("abc")) == 0.0


class TestVertexEdgeOverlap:
    def test_identical(self):
        g = chain("abcde")
        assert vertex_edge_overlap(g, g) == 1.0

    def test_worked_seven_ninths_case(self):
        # 5 correct nodes + 2 correct edges out of 9 proposed/true items
        gt = chain("abcde")
        cand = graph("abcde", [("a", "b"), ("b", "c"), ("a", "d"), ("a", "e")])
        assert vertex_edge_overlap(gt, cand) == pytest.approx(7 / 9)

    def test_empty_candidate(self):
        assert vertex_edge_overlap(chain("abc"), graph([])) == 0.0

    def test_matches_direct_arithmetic_on_random_pairs(self):
        rng = np.random.default_rng(0)
        labels = list("abcdefgh")
        for _ in range(100):
            gt = random_graph(rng, labels)
            cand = random_graph(rng, labels)
            common_v = len(set(gt.nodes) & set(cand.nodes))
            common_e = len(gt.edge_set() & cand.edge_set())
            expected_vo = f1(common_v, len(cand.nodes), len(gt.nodes)) if cand.nodes else 0.0
            assert vertex_overlap(gt, cand) == pytest.approx(expected_vo)
            expected_veo = (
                f1(common_v + common_e, len(cand.nodes) + len(cand.edges), len(gt.nodes) + len(gt.edges))
                if cand.nodes or cand.edges
                else 0.0
            )
            assert vertex_edge_overlap(gt, cand) == pytest.approx(expected_veo)
            if gt.edges and cand.edges:
                assert edge_overlap(gt, cand) == pytest.approx(f1(common_e, len(cand.edges), len(gt.edges)))

    def test_perfect_candidates_score_one(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            g = random_graph(rng, list("abcdefg"))
            s = score_graph(g, g)
            assert (s.vo, s.eo, s.veo) == (1.0, 1.0, 1.0)


class TestProperties:
    def test_relabeling_invariance(self):
        gt = chain("abcd")
        cand = graph("abcd", [("a", "b"), ("c", "d")])
        mapping = {"a": "w", "b": "x", "c": "y", "d": "z"}

        def relabel(g):
            return graph([mapping[n] for n in g.nodes], [(mapping[a], mapping[b]) for a, b in g.edges])

        assert score_graph(gt, cand) == score_graph(relabel(gt), relabel(cand))

    def test_false_positive_edge_hurts_eo_veo_not_vo(self):
        gt = chain("abcd")
        perfect = chain("abcd")
        extra = graph("abcd", [("a", "b"), ("b", "c"), ("c", "d"), ("a", "d")])
        assert vertex_overlap(gt, extra) == vertex_overlap(gt, perfect) == 1.0
        assert edge_overlap(gt, extra) < edge_overlap(gt, perfect)
        assert vertex_edge_overlap(gt, extra) < vertex_edge_overlap(gt, perfect)

    def test_range_membership(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            gt = random_graph(rng, list("abcdef"))
            cand = random_graph(rng, list("abcdef"))
            s = score_graph(gt, cand)
            assert 0 <= s.vo <= 1 and 0 <= s.eo <= 1 and 0 <= s.veo <= 1


class TestScoreBatch:
    def test_single_case(self):
        g = chain("abc")
        mean, std, scores = score_batch([(g, g)])
        assert mean == GraphScore(1.0, 1.0, 1.0)
        assert std == GraphScore(0.0, 0.0, 0.0)
        assert scores == [GraphScore(1.0, 1.0, 1.0)]

    def test_two_point_statistics(self):
        gt1 = chain("abcde")
        cand1 = graph("abcde", [("a", "b"), ("b", "c"), ("a", "d"), ("a", "e")])  # veo 7/9
        mean, std, scores = score_batch([(gt1, gt1), (gt1, cand1)])
        expected_mean = (1.0 + 7 / 9) / 2
        expected_std = abs(1.0 - 7 / 9) / 2
        assert mean.veo == pytest.approx(expected_mean)
        assert std.veo == pytest.approx(expected_std)

    def test_population_std_convention(self):
        # population (ddof=0), not sample: two cases 0.6/0.8 give std 0.1
        gts, cands = [], []
        g5 = chain(["1", "2", "3", "4", "5"])
        assert vertex_overlap(g5, graph(["1", "2", "3"])) == pytest.approx(0.75)
        mean, std, _ = score_batch([(g5, g5), (g5, graph(["1", "2", "3"]))])
        assert std.vo == pytest.approx((1.0 - 0.75) / 2)

    def test_mean_is_sum_over_n(self):
        rng = np.random.default_rng(3)
        cases = [(random_graph(rng, list("abcdef")), random_graph(rng, list("abcdef"))) for _ in range(10)]
        mean, _, scores = score_batch(cases)
        assert mean.veo == pytest.approx(sum(s.veo for s in scores) / 10, abs=1e-12)
        assert mean.vo == pytest.approx(sum(s.vo for s in scores) / 10, abs=1e-12)

    def test_empty_rejected(self):
        with pytest.raises(InvalidInputError):
            score_batch([])

    def test_order_preserved(self):
        g = chain("abc")
        bad = graph("xyz")
        _, _, scores = score_batch([(g, g), (g, bad)])
        assert scores[0].vo == 1.0 and scores[1].vo == 0.0


class TestReports:
    def test_csv_layout(self, tmp_path):
        rows = [("case1", GraphScore(1.0, 0.5, 0.75)), ("case2", GraphScore(0.9, 0.4, 0.6))]
        path = tmp_path / "scores.csv"
        write_scores_csv(rows, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "case_id,vo,eo,veo"
        assert lines[1].startswith("case1,1.0,0.5,0.75")
        assert len(lines) == 3

    def test_summary_structure(self):
        summary = summary_dict(GraphScore(1.0, 0.5, 0.75), GraphScore(0.0, 0.1, 0.05), 7)
        assert summary["n_cases"] == 7
        assert summary["means"]["veo"] == 0.75
        assert summary["stddevs"]["eo"] == 0.1

    def test_score_range_validated(self):
        with pytest.raises(InvalidInputError):
            GraphScore(1.5, 0.5, 0.5)
