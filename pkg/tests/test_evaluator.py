import itertools

import numpy as np
import pytest

from hinstruct.evaluator import (
    EvalResult,
    EvaluationError,
    NodeClassificationEvaluator,
    RecommendationEvaluator,
    auc,
    evaluate_node_classification,
    evaluate_recommendation,
    macro_f1,
    path_commuting_matrix,
    structure_score_matrix,
)
from hinstruct.hin import HinGraph
from hinstruct.sparse import MatrixBlowupError, SparseMatrix
from hinstruct.splits import NodeLabelSplit, RecommendationSplit
from hinstruct.structure import MetaPath, MetaStructure, enumerate_paths
from hinstruct.synth import toy_schema

from conftest import random_structure

U, B, A, I = 0, 1, 2, 3
RATES, RATED_BY, FRIEND, BELONGS, CONTAINS, LOCATED, HOSTS = range(7)


def toy_graph(rng=None, n_users=2, n_biz=2, friend=None, rates=None):
    """Tiny in-memory network over the full toy schema."""
    schema = toy_schema()
    rng = rng or np.random.default_rng(0)
    counts = {"user": n_users, "business": n_biz, "category": 2, "city": 2}
    if friend is None:
        friend = (rng.random((n_users, n_users)) < 0.3).astype(float)
        np.fill_diagonal(friend, 0)
    if rates is None:
        rates = (rng.random((n_users, n_biz)) < 0.4).astype(float)
    belongs = (rng.random((n_biz, 2)) < 0.5).astype(float)
    located = (rng.random((n_biz, 2)) < 0.5).astype(float)
    rates_m = SparseMatrix.from_dense(rates)
    belongs_m = SparseMatrix.from_dense(belongs)
    located_m = SparseMatrix.from_dense(located)
    adjacency = {
        RATES: rates_m,
        RATED_BY: rates_m.transpose(),
        FRIEND: SparseMatrix.from_dense(friend),
        BELONGS: belongs_m,
        CONTAINS: belongs_m.transpose(),
        LOCATED: located_m,
        HOSTS: located_m.transpose(),
    }
    return HinGraph(schema, tuple(counts[nt.name] for nt in schema.node_types), adjacency)


class TestCommutingMatrix:
    def test_single_edge_is_adjacency(self):
        graph = toy_graph()
        got = path_commuting_matrix(graph, MetaPath((U, B), (RATES,)))
        assert got.allclose(graph.adjacency_of(RATES))

    def test_hand_multiplied_friend_rates(self):
        friend = np.array([[0.0, 1.0], [1.0, 0.0]])
        rates = np.array([[1.0, 0.0], [1.0, 1.0]])
        graph = toy_graph(friend=friend, rates=rates)
        got = path_commuting_matrix(graph, MetaPath((U, U, B), (FRIEND, RATES)))
        assert np.allclose(got.to_dense(), [[1.0, 1.0], [1.0, 0.0]])

    def test_counts_path_instances(self):
        rng = np.random.default_rng(3)
        graph = toy_graph(rng, n_users=6, n_biz=5)
        path = MetaPath((U, U, B, A), (FRIEND, RATES, BELONGS))
        got = path_commuting_matrix(graph, path).to_dense()
        expect = (
            graph.adjacency_of(FRIEND).to_dense()
            @ graph.adjacency_of(RATES).to_dense()
            @ graph.adjacency_of(BELONGS).to_dense()
        )
        assert np.allclose(got, expect)

    def test_empty_relation_zero_matrix(self):
        graph = toy_graph(friend=np.zeros((2, 2)))
        got = path_commuting_matrix(graph, MetaPath((U, U, B), (FRIEND, RATES)))
        assert got.nnz == 0

    def test_blowup_guard_propagates(self):
        rng = np.random.default_rng(5)
        graph = toy_graph(rng, n_users=30, n_biz=30)
        path = MetaPath((U, U, U, B), (FRIEND, FRIEND, RATES))
        with pytest.raises(MatrixBlowupError):
            path_commuting_matrix(graph, path, flop_budget=5)


class TestScoreMatrix:
    def test_single_path_row_normalized(self):
        graph = toy_graph()
        ms = MetaStructure((U, U, B), ((0, 1, FRIEND), (1, 2, RATES)), 0, 2)
        got = structure_score_matrix(graph, ms)
        expect = path_commuting_matrix(graph, MetaPath((U, U, B), (FRIEND, RATES))).row_normalize()
        assert got.allclose(expect)

    def test_and_semantics_zero_dominates(self):
        friend = np.array([[0.0, 1.0], [0.0, 0.0]])
        rates = np.array([[0.0, 1.0], [1.0, 0.0]])
        graph = toy_graph(friend=friend, rates=rates)
        # friend arm connects (0, 0); co-rating arm does not
        ms = MetaStructure(
            (U, U, B, B),
            ((0, 1, FRIEND), (1, 3, RATES), (0, 2, RATES), (2, 1, RATED_BY)),
            0,
            3,
        )
        score = structure_score_matrix(graph, ms)
        paths = enumerate_paths(ms)
        mats = [
            path_commuting_matrix(graph, p).row_normalize().to_dense() for p in paths
        ]
        nz = np.ones_like(mats[0], dtype=bool)
        for m in mats:
            nz &= m > 0
        assert np.array_equal(score.to_dense() > 0, nz)

    def test_values_in_unit_interval(self):
        rng = np.random.default_rng(8)
        graph = toy_graph(rng, n_users=10, n_biz=8)
        for _ in range(30):
            ms = random_structure(graph.schema, rng, max_nodes=6)
            score = structure_score_matrix(graph, ms)
            if score.nnz:
                assert score.data.min() > 0.0 and score.data.max() <= 1.0 + 1e-12

    def test_nonzero_iff_every_path_connects(self):
        # exhaustive pair check against brute-force per-path connectivity
        rng = np.random.default_rng(13)
        graph = toy_graph(rng, n_users=12, n_biz=10)
        for _ in range(25):
            ms = random_structure(graph.schema, rng, max_nodes=6)
            score = structure_score_matrix(graph, ms).to_dense()
            paths = enumerate_paths(ms)
            connect = None
            for p in paths:
                m = path_commuting_matrix(graph, p).to_dense() > 0
                connect = m if connect is None else (connect & m)
            assert np.array_equal(score > 0, connect)

    def test_path_order_irrelevant(self):
        rng = np.random.default_rng(21)
        graph = toy_graph(rng, n_users=6, n_biz=6)
        ms = MetaStructure(
            (U, U, B, B),
            ((0, 1, FRIEND), (1, 3, RATES), (0, 2, RATES), (2, 1, RATED_BY)),
            0,
            3,
        )
        a = structure_score_matrix(graph, ms)
        b = structure_score_matrix(graph, ms)
        assert a.allclose(b, rtol=0)


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.9], [0.1]) == 1.0

    def test_full_tie(self):
        assert auc([0.5], [0.5]) == 0.5

    def test_matches_quadratic_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            n_pos = int(rng.integers(1, 60))
            n_neg = int(rng.integers(1, 60))
            # quantized scores force plenty of ties
            pos = np.round(rng.random(n_pos), 1)
            neg = np.round(rng.random(n_neg), 1)
            wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
            assert abs(auc(pos, neg) - wins / (n_pos * n_neg)) < 1e-12

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(19)
        pos, neg = rng.random(40), rng.random(30)
        assert abs(auc(pos, neg) - auc(np.exp(3 * pos), np.exp(3 * neg))) < 1e-12

    def test_empty_rejected(self):
        with pytest.raises(EvaluationError):
            auc([], [0.1])


class TestMacroF1:
    def test_perfect(self):
        assert macro_f1([0, 1, 2], [0, 1, 2], 3) == 1.0

    def test_constant_prediction_binary(self):
        # all class 0, gold half/half: F1_0 = 2*(0.5*1)/1.5 = 2/3, F1_1 = 0
        got = macro_f1([0, 0, 0, 0], [0, 0, 1, 1], 2)
        assert abs(got - (2 / 3 + 0.0) / 2) < 1e-15

    def test_absent_class_contributes_zero(self):
        got = macro_f1([0, 1], [0, 1], 3)
        assert abs(got - 2 / 3) < 1e-15

    def test_three_class_confusion(self):
        pred = [0] * 5 + [1] * 1 + [1] * 4 + [2] * 2
        gold = [0] * 5 + [0] * 1 + [1] * 4 + [2] * 2
        # class 0: P=1, R=5/6; class 1: P=4/5, R=1; class 2: P=1, R=1
        f0 = 2 * (5 / 6) / (1 + 5 / 6)
        f1 = 2 * (4 / 5) / (4 / 5 + 1)
        assert abs(macro_f1(pred, gold, 3) - (f0 + f1 + 1.0) / 3) < 1e-15

    def test_length_mismatch(self):
        with pytest.raises(EvaluationError):
            macro_f1([0], [0, 1], 2)

    def test_matches_direct_computation_fuzz(self):
        rng = np.random.default_rng(23)
        for _ in range(100):
            k = int(rng.integers(2, 6))
            n = int(rng.integers(1, 50))
            pred = rng.integers(0, k, size=n)
            gold = rng.integers(0, k, size=n)
            total = 0.0
            for c in range(k):
                tp = np.sum((pred == c) & (gold == c))
                fp = np.sum((pred == c) & (gold != c))
                fn = np.sum((pred != c) & (gold == c))
                p = tp / (tp + fp) if tp + fp else 0.0
                r = tp / (tp + fn) if tp + fn else 0.0
                total += 2 * p * r / (p + r) if p + r else 0.0
            assert abs(macro_f1(pred, gold, k) - total / k) < 1e-12


class TestEvaluateRecommendation:
    def make_split(self, pos, neg):
        return RecommendationSplit(
            target_edge_type=RATES,
            positives={"train": [], "val": pos, "test": pos},
            negatives={"train": [], "val": neg, "test": neg},
            reserved=(),
        )

    def test_perfect_scorer(self):
        friend = np.array([[0.0, 1.0], [0.0, 0.0]])
        rates = np.array([[0.0, 0.0], [1.0, 0.0]])
        graph = toy_graph(friend=friend, rates=rates)
        ms = MetaStructure((U, U, B), ((0, 1, FRIEND), (1, 2, RATES)), 0, 2)
        split = self.make_split(pos=[(0, 0)], neg=[(0, 1), (1, 0)])
        result = evaluate_recommendation(graph, ms, split, "val")
        assert result.value == 1.0 and result.metric == "auc" and result.split == "val"

    def test_zero_scorer_half(self):
        graph = toy_graph(friend=np.zeros((2, 2)))
        ms = MetaStructure((U, U, B), ((0, 1, FRIEND), (1, 2, RATES)), 0, 2)
        split = self.make_split(pos=[(0, 0)], neg=[(1, 1)])
        assert evaluate_recommendation(graph, ms, split, "val").value == 0.5

    def test_type_mismatch(self):
        graph = toy_graph()
        ms = MetaStructure((U, U), ((0, 1, FRIEND),), 0, 1)
        split = self.make_split(pos=[(0, 0)], neg=[(1, 1)])
        with pytest.raises(EvaluationError, match="do not match"):
            evaluate_recommendation(graph, ms, split, "val")

    def test_purity_bit_identical(self):
        rng = np.random.default_rng(29)
        graph = toy_graph(rng, n_users=10, n_biz=8)
        ms = MetaStructure((U, U, B), ((0, 1, FRIEND), (1, 2, RATES)), 0, 2)
        split = self.make_split(
            pos=[(0, 1), (2, 3), (4, 5)], neg=[(1, 1), (3, 3), (5, 5)]
        )
        a = evaluate_recommendation(graph, ms, split, "val").value
        b = evaluate_recommendation(graph, ms, split, "val").value
        assert a == b

    def test_evaluator_class(self):
        graph = toy_graph()
        ms = MetaStructure((U, B), ((0, 1, RATES),), 0, 1)
        split = self.make_split(pos=[(0, 0)], neg=[(1, 1)])
        result = RecommendationEvaluator("val").evaluate(graph, split, ms)
        assert isinstance(result, EvalResult)


class TestEvaluateNodeClassification:
    def make_graph_and_split(self):
        # friendship cliques {0,1,2} and {3,4,5} with known labels
        friend = np.zeros((6, 6))
        for group in ((0, 1, 2), (3, 4, 5)):
            for a in group:
                for b in group:
                    if a != b:
                        friend[a, b] = 1.0
        graph = toy_graph(friend=friend, rates=np.zeros((6, 2)), n_users=6, n_biz=2)
        labels = {i: 0 if i < 3 else 1 for i in range(6)}
        split = NodeLabelSplit(
            target_node_type=U,
            labels=labels,
            train=(0, 3),
            val=(1, 4),
            test=(2, 5),
            num_classes=2,
        )
        return graph, split

    def test_clique_votes_perfect(self):
        graph, split = self.make_graph_and_split()
        ms = MetaStructure((U, U), ((0, 1, FRIEND),), 0, 1)
        result = evaluate_node_classification(graph, ms, split, "val")
        assert result.value == 1.0 and result.metric == "macro_f1"

    def test_zero_scores_majority_fallback(self):
        graph, split = self.make_graph_and_split()
        ms = MetaStructure((U, B, U), ((0, 1, RATES), (1, 2, RATED_BY)), 0, 2)
        result = evaluate_node_classification(graph, ms, split, "val")
        # rates matrix is empty: every vote row is zero, majority = class 0
        pred = [0, 0]
        gold = [0, 1]
        assert result.value == macro_f1(pred, gold, 2)

    def test_type_mismatch(self):
        graph, split = self.make_graph_and_split()
        ms = MetaStructure((U, B), ((0, 1, RATES),), 0, 1)
        with pytest.raises(EvaluationError, match="node classification needs"):
            evaluate_node_classification(graph, ms, split, "val")

    def test_evaluator_class(self):
        graph, split = self.make_graph_and_split()
        ms = MetaStructure((U, U), ((0, 1, FRIEND),), 0, 1)
        result = NodeClassificationEvaluator("test").evaluate(graph, split, ms)
        assert result.split == "test"


class TestEvalResult:
    def test_range_enforced(self):
        with pytest.raises(EvaluationError):
            EvalResult("auc", 1.5, "val", 0.0)
