"""Evaluation: classification, link prediction, injected-link quality."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import Tensor


class MetricError(Exception):
    pass


def _arr(x):
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)


@dataclass
class ClassificationReport:
    accuracy_macro: float
    auc_roc_macro: float
    per_class_accuracy: list


@dataclass
class LinkPredReport:
    accuracy: float
    precision: float
    recall: float
    threshold: float
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0


@dataclass
class InjectionQualityReport:
    k: int
    hits_total: int
    hits_not_in_train: int
    hit_rate_total: float
    hit_rate_not_in_train: float
    mean_rank: Optional[float]      # None when there are no hits
    mr_ratio: Optional[float]
    neighbor_fraction: float
    disconnected_fraction: float


def accuracy_macro(logits, labels, mask):
    """Unweighted mean of per-class recall over classes present in the mask."""
    logits = _arr(logits)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if not mask.any():
        raise MetricError("accuracy_macro: empty mask")
    pred = logits.argmax(axis=1)
    n_classes = logits.shape[1]
    per_class = []
    recalls = []
    for c in range(n_classes):
        sel = mask & (labels == c)
        if not sel.any():
            warnings.warn(f"class {c} absent from mask; excluded from macro mean")
            per_class.append(float("nan"))
            continue
        r = float((pred[sel] == c).mean())
        per_class.append(r)
        recalls.append(r)
    return float(np.mean(recalls)), per_class


def _auc_binary(scores, positive):
    """Mann-Whitney AUC with midrank tie handling."""
    n_pos = int(positive.sum())
    n_neg = len(positive) - n_pos
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    ranks = np.empty(len(scores))
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    rank_sum = ranks[positive].sum()
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def auc_roc_macro(probabilities, labels, mask):
    """One-vs-rest AUC per class, unweighted mean over classes that have
    both positives and negatives in the mask."""
    probs = _arr(probabilities)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if not mask.any():
        raise MetricError("auc_roc_macro: empty mask")
    y = labels[mask]
    p = probs[mask]
    present = np.unique(y)
    if len(present) < 2:
        raise MetricError("auc_roc_macro: need at least two classes in mask")
    aucs = []
    for c in present:
        pos = y == c
        aucs.append(_auc_binary(p[:, c], pos))
    return float(np.mean(aucs))


def link_pred_report(scores, pos_pairs, neg_pairs, threshold=0.5):
    """Confusion-based accuracy/precision/recall over pos ∪ neg pairs;
    predicted positive iff score >= threshold."""
    s = _arr(scores)
    if not pos_pairs or not neg_pairs:
        raise MetricError("link_pred_report: empty pair set")
    pos_scores = np.array([s[i, j] for i, j in pos_pairs])
    neg_scores = np.array([s[i, j] for i, j in neg_pairs])
    tp = int((pos_scores >= threshold).sum())
    fn = len(pos_pairs) - tp
    fp = int((neg_scores >= threshold).sum())
    tn = len(neg_pairs) - fp
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    accuracy = (tp + tn) / (tp + tn + fp + fn)
    return LinkPredReport(
        accuracy=accuracy, precision=precision, recall=recall,
        threshold=threshold, tp=tp, tn=tn, fp=fp, fn=fn,
    )


def injection_quality(ranked, observed_edges, train_edges, components):
    """Quality of a ranked injected-link list against the observed graph.

    observed_edges / train_edges are sets of DIRECTED pairs (each undirected
    edge in both orientations). mean_rank is the mean 1-based rank of ranked
    pairs that are observed edges; mr_ratio = 1 - mean_rank / k. Each ranked
    pair is also classified as a neighbor (an observed edge) or as lying in
    a different component of the observed graph.
    """
    k = len(ranked)
    if k == 0:
        raise MetricError("injection_quality: empty ranked list")
    held_out = observed_edges - train_edges
    hit_ranks = []
    hits_not_in_train = 0
    neighbors = 0
    disconnected = 0
    for rank, (i, j, _score) in enumerate(ranked, start=1):
        pair = (i, j)
        if pair in observed_edges:
            hit_ranks.append(rank)
            neighbors += 1
        elif components[i] != components[j]:
            disconnected += 1
        if pair in held_out:
            hits_not_in_train += 1
    hits_total = len(hit_ranks)
    mean_rank = float(np.mean(hit_ranks)) if hit_ranks else None
    mr_ratio = 1.0 - mean_rank / k if mean_rank is not None else None
    return InjectionQualityReport(
        k=k,
        hits_total=hits_total,
        hits_not_in_train=hits_not_in_train,
        hit_rate_total=hits_total / k,
        hit_rate_not_in_train=hits_not_in_train / k,
        mean_rank=mean_rank,
        mr_ratio=mr_ratio,
        neighbor_fraction=neighbors / k,
        disconnected_fraction=disconnected / k,
    )


def report_to_kv(report, prefix=""):
    """Flat key=value text block for any report dataclass."""
    lines = []
    for key, val in vars(report).items():
        if isinstance(val, list):
            val = ";".join("%.17g" % v for v in val)
        elif val is None:
            val = "absent"
        elif isinstance(val, float):
            val = "%.17g" % val
        lines.append(f"{prefix}{key}={val}")
    return "\n".join(lines) + "\n"
