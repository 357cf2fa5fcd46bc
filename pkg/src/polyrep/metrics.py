"""Classification and retrieval metrics.

Classification: accuracy plus support-weighted precision, F1, and
one-vs-rest ROC AUC (trapezoidal over softmax scores, ties grouped).

Retrieval: each query retrieves as many items as it has same-class
neighbors, so precision equals recall per query.  Average precision runs
over the full ranking with binary relevance; NDCG uses binary gains and a
log2 discount at that same cutoff.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    f1: float
    auc: float

    def as_dict(self):
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "f1": self.f1,
            "auc": self.auc,
        }


@dataclass(frozen=True)
class RetrievalMetrics:
    precision: float
    recall: float
    f1: float
    map: float
    ndcg: float

    def as_dict(self):
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "map": self.map,
            "ndcg": self.ndcg,
        }


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def binary_roc_auc(scores, positives) -> float:
    """Area under the ROC curve by the trapezoidal rule.

    Tied scores are grouped into single curve points, which is equivalent to
    midpoint (average-rank) tie handling.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC AUC needs both positives and negatives")
    order = np.argsort(-scores, kind="stable")
    y = positives[order]
    s = scores[order]
    # Cumulative TP/FP at each distinct-score boundary.
    boundary = np.nonzero(np.diff(s))[0]
    idx = np.concatenate([boundary, [len(s) - 1]])
    tp = np.concatenate([[0], np.cumsum(y)[idx]]) / n_pos
    fp = np.concatenate([[0], np.cumsum(~y)[idx]]) / n_neg
    return float(np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1]) * 0.5))


def classification_metrics(logits, labels) -> ClassificationMetrics:
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n, n_classes = logits.shape
    probs = softmax(logits)
    pred = probs.argmax(axis=1)
    accuracy = float((pred == labels).mean())

    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError("AUC undefined on a single-class test set")

    precision_sum = 0.0
    f1_sum = 0.0
    auc_sum = 0.0
    for c in present:
        support = int((labels == c).sum())
        tp = int(((pred == c) & (labels == c)).sum())
        predicted = int((pred == c).sum())
        prec = tp / predicted if predicted else 0.0
        rec = tp / support
        f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
        auc = binary_roc_auc(probs[:, c], labels == c)
        precision_sum += support * prec
        f1_sum += support * f1
        auc_sum += support * auc
    return ClassificationMetrics(
        accuracy=accuracy,
        precision=precision_sum / n,
        f1=f1_sum / n,
        auc=auc_sum / n,
    )


def average_precision(relevant_in_rank_order) -> float:
    """AP over a full binary-relevance ranking."""
    rel = np.asarray(relevant_in_rank_order, dtype=bool)
    total = int(rel.sum())
    if total == 0:
        return 0.0
    cum = np.cumsum(rel)
    positions = np.nonzero(rel)[0] + 1
    return float((cum[positions - 1] / positions).sum() / total)


def ndcg_at_k(relevant_in_rank_order, k: int) -> float:
    """Binary-gain NDCG with log2 discount at cutoff k."""
    rel = np.asarray(relevant_in_rank_order, dtype=bool)
    total = int(rel.sum())
    if total == 0 or k == 0:
        return 0.0
    discounts = 1.0 / np.log2(np.arange(2, k + 2))
    dcg = float((rel[:k] * discounts[: len(rel[:k])]).sum())
    ideal = float(discounts[: min(k, total)].sum())
    return dcg / ideal


def retrieval_metrics(embeddings, labels, similarity: str = "cosine") -> RetrievalMetrics:
    """Rank every other item per query and average the metrics.

    Per query q, the cutoff k equals the number of same-class items
    (excluding q); queries whose class has a single member are skipped with
    a warning.  Ties break stably by item index.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = len(labels)
    if similarity == "cosine":
        norms = np.linalg.norm(emb, axis=1, keepdims=True)
        unit = emb / np.maximum(norms, 1e-300)
        sims = unit @ unit.T
    elif similarity == "euclidean":
        sq = (emb**2).sum(axis=1)
        sims = -(sq[:, None] + sq[None, :] - 2 * emb @ emb.T)
    else:
        raise ValueError(f"unknown similarity {similarity!r}")

    precs, aps, ndcgs = [], [], []
    for q in range(n):
        k = int((labels == labels[q]).sum()) - 1
        if k == 0:
            logger.warning("query %d skipped: class %d has one item", q, labels[q])
            continue
        others = np.concatenate([np.arange(q), np.arange(q + 1, n)])
        order = others[np.lexsort((others, -sims[q, others]))]
        rel = labels[order] == labels[q]
        precs.append(float(rel[:k].mean()))
        aps.append(average_precision(rel))
        ndcgs.append(ndcg_at_k(rel, k))
    if not precs:
        raise ValueError("no usable retrieval queries (all classes singletons)")
    p = float(np.mean(precs))
    return RetrievalMetrics(
        precision=p, recall=p, f1=p, map=float(np.mean(aps)), ndcg=float(np.mean(ndcgs))
    )
