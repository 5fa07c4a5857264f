"""Deterministic structure scoring and metric computation.

A meta-path scores node pairs through its commuting matrix: the left-to-right
product of the per-edge adjacency matrices, whose (s, t) entry counts path
instances from s to t. A meta-structure decomposes into its source-to-target
paths; each path matrix is row-normalized and the structure score is their
elementwise product, so a pair scores nonzero exactly when every decomposed
path connects it.

Recommendation fitness is AUC over the split's positive/negative pairs;
node-classification fitness is Macro-F1 of a score-weighted vote over train
nodes. Both evaluators are pure functions of their inputs and sit behind the
``Evaluator`` protocol so a learned fitness can be plugged in instead.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .hin import HinGraph
from .sparse import DEFAULT_FLOP_BUDGET, SparseMatrix
from .splits import NodeLabelSplit, RecommendationSplit
from .structure import MetaPath, MetaStructure, enumerate_paths


class EvaluationError(ValueError):
    """Structure and task are incompatible, or metric inputs are malformed."""


@dataclass(frozen=True)
class EvalResult:
    metric: str  # "auc" | "macro_f1"
    value: float
    split: str  # "val" | "test"
    wall_time: float  # seconds; diagnostic only, never serialized

    def __post_init__(self):
        if not (0.0 <= self.value <= 1.0):
            raise EvaluationError(f"metric value {self.value} outside [0, 1]")


class Evaluator(Protocol):
    def evaluate(self, graph: HinGraph, split, ms: MetaStructure) -> EvalResult: ...


def path_commuting_matrix(
    graph: HinGraph, path: MetaPath, flop_budget: int | None = DEFAULT_FLOP_BUDGET
) -> SparseMatrix:
    """Product of the adjacency matrices along the path's edge types."""
    result = graph.adjacency_of(path.edge_types[0])
    for eid in path.edge_types[1:]:
        result = result.matmul(graph.adjacency_of(eid), flop_budget)
    return result


def structure_score_matrix(
    graph: HinGraph, ms: MetaStructure, flop_budget: int | None = DEFAULT_FLOP_BUDGET
) -> SparseMatrix:
    """Elementwise product of the row-normalized per-path commuting matrices.

    Paths with identical type sequences share one matrix and contribute once;
    repetition would only re-exponentiate values without changing which pairs
    connect.
    """
    unique = {}
    for path in enumerate_paths(ms):
        unique.setdefault(path.type_sequence(), path)
    score = None
    for seq in sorted(unique):
        normalized = path_commuting_matrix(graph, unique[seq], flop_budget).row_normalize()
        score = normalized if score is None else score.hadamard(normalized)
    return score


def auc(pos_scores, neg_scores) -> float:
    """Probability a positive outranks a negative, ties counted half.

    Computed from tie-averaged ranks of the pooled scores, equivalent to
    (#{p > n} + 0.5 * #{p = n}) / (|pos| * |neg|).
    """
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise EvaluationError("auc needs at least one positive and one negative score")
    scores = np.concatenate([pos, neg])
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    head = np.empty(scores.size, dtype=bool)
    head[0] = True
    head[1:] = sorted_scores[1:] != sorted_scores[:-1]
    starts = np.flatnonzero(head)
    ends = np.append(starts[1:], scores.size)
    avg_rank = (starts + ends - 1) / 2.0 + 1.0  # 1-based, ties averaged
    ranks = np.empty(scores.size, dtype=np.float64)
    ranks[order] = np.repeat(avg_rank, ends - starts)
    u_stat = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u_stat / (pos.size * neg.size))


def macro_f1(pred, gold, num_classes: int) -> float:
    """Unweighted mean of per-class F1; a class with no support and no
    predictions contributes 0."""
    pred = np.asarray(pred, dtype=np.int64)
    gold = np.asarray(gold, dtype=np.int64)
    if pred.shape != gold.shape:
        raise EvaluationError("prediction/gold length mismatch")
    if pred.size and not (
        0 <= pred.min() and pred.max() < num_classes and 0 <= gold.min() and gold.max() < num_classes
    ):
        raise EvaluationError("class id outside [0, num_classes)")
    f1_sum = 0.0
    for cls in range(num_classes):
        tp = int(np.sum((pred == cls) & (gold == cls)))
        fp = int(np.sum((pred == cls) & (gold != cls)))
        fn = int(np.sum((pred != cls) & (gold == cls)))
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        if precision + recall > 0:
            f1_sum += 2 * precision * recall / (precision + recall)
    return f1_sum / num_classes


def evaluate_recommendation(
    graph: HinGraph,
    ms: MetaStructure,
    split: RecommendationSplit,
    part: str = "val",
    flop_budget: int | None = DEFAULT_FLOP_BUDGET,
) -> EvalResult:
    started = time.perf_counter()
    et = graph.schema.edge_type(split.target_edge_type)
    if ms.nodes[ms.source] != et.src or ms.nodes[ms.target] != et.dst:
        raise EvaluationError(
            f"structure endpoints ({ms.nodes[ms.source]}, {ms.nodes[ms.target]}) do not "
            f"match target relation {et.name!r} ({et.src}, {et.dst})"
        )
    score = structure_score_matrix(graph, ms, flop_budget)
    value = auc(score.pick(split.positives[part]), score.pick(split.negatives[part]))
    return EvalResult("auc", value, part, time.perf_counter() - started)


def evaluate_node_classification(
    graph: HinGraph,
    ms: MetaStructure,
    split: NodeLabelSplit,
    part: str = "val",
    flop_budget: int | None = DEFAULT_FLOP_BUDGET,
) -> EvalResult:
    started = time.perf_counter()
    t = split.target_node_type
    if ms.nodes[ms.source] != t or ms.nodes[ms.target] != t:
        raise EvaluationError(
            f"node classification needs source and target of node type {t}, "
            f"got ({ms.nodes[ms.source]}, {ms.nodes[ms.target]})"
        )
    score = structure_score_matrix(graph, ms, flop_budget)

    k = split.num_classes
    train_idx = np.asarray(split.train, dtype=np.int64)
    train_cls = np.asarray([split.labels[i] for i in split.train], dtype=np.int64)
    majority = int(np.argmax(np.bincount(train_cls, minlength=k)))
    col_class = np.full(score.cols, -1, dtype=np.int64)
    col_class[train_idx] = train_cls

    nodes = list(split.part(part))
    preds = np.empty(len(nodes), dtype=np.int64)
    for out_pos, node in enumerate(nodes):
        lo, hi = score.indptr[node], score.indptr[node + 1]
        cols = score.indices[lo:hi]
        vals = score.data[lo:hi]
        mask = col_class[cols] >= 0
        if not mask.any():
            preds[out_pos] = majority
            continue
        votes = np.zeros(k, dtype=np.float64)
        np.add.at(votes, col_class[cols[mask]], vals[mask])
        preds[out_pos] = int(np.argmax(votes))
    gold = np.asarray([split.labels[i] for i in nodes], dtype=np.int64)
    value = macro_f1(preds, gold, k)
    return EvalResult("macro_f1", value, part, time.perf_counter() - started)


@dataclass(frozen=True)
class RecommendationEvaluator:
    part: str = "val"
    flop_budget: int | None = DEFAULT_FLOP_BUDGET

    metric = "auc"

    def evaluate(self, graph, split, ms) -> EvalResult:
        return evaluate_recommendation(graph, ms, split, self.part, self.flop_budget)


@dataclass(frozen=True)
class NodeClassificationEvaluator:
    part: str = "val"
    flop_budget: int | None = DEFAULT_FLOP_BUDGET

    metric = "macro_f1"

    def evaluate(self, graph, split, ms) -> EvalResult:
        return evaluate_node_classification(graph, ms, split, self.part, self.flop_budget)
