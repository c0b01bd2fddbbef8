"""Evaluation metrics with a dual-route AU-ROC.

Two independent implementations of AU-ROC are kept side by side: a
Mann-Whitney tied-rank statistic and a trapezoidal sweep over the ROC
curve. auroc() always runs both and refuses to answer if they disagree
beyond 1e-9, which guards each against bugs in the other.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import NumericError, ParameterError, UndefinedMetricError


def _check_inputs(y_true, scores):
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ParameterError(f"labels {y.shape} and scores {s.shape} must be equal-length 1-D arrays")
    if not np.all((y == 0) | (y == 1)):
        raise ParameterError("labels must be 0 or 1")
    if not np.all(np.isfinite(s)):
        raise NumericError("scores contain non-finite values")
    if y.sum() == 0 or y.sum() == y.size:
        raise UndefinedMetricError("AU-ROC undefined: only one class present")
    return y.astype(np.int64), s


def _average_ranks(s):
    # 1-based ranks, ties get the mean rank of their block
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc_rank(y_true, scores) -> float:
    """Mann-Whitney AU-ROC; tied positive/negative pairs count 0.5."""
    y, s = _check_inputs(y_true, scores)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    ranks = _average_ranks(s)
    u = ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auroc_sweep(y_true, scores) -> float:
    """Trapezoidal area under the ROC curve swept over score thresholds."""
    y, s = _check_inputs(y_true, scores)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    order = np.argsort(-s, kind="mergesort")
    ys = y[order]
    ss = s[order]
    tps = np.cumsum(ys)
    fps = np.cumsum(1 - ys)
    # keep only the last index of each tie block so ties become one ROC vertex
    block_end = np.append(ss[1:] != ss[:-1], True)
    tpr = np.concatenate([[0.0], tps[block_end] / n_pos])
    fpr = np.concatenate([[0.0], fps[block_end] / n_neg])
    return float(np.trapezoid(tpr, fpr))


def auroc(y_true, scores, tol: float = 1e-9) -> float:
    """AU-ROC via both routes; raises NumericError if they disagree."""
    a = auroc_rank(y_true, scores)
    b = auroc_sweep(y_true, scores)
    if abs(a - b) > tol:
        raise NumericError(f"AU-ROC routes disagree: rank {a!r} vs sweep {b!r}")
    return a


def confusion_at(y_true, scores, threshold: float = 0.5) -> dict:
    """Confusion counts and derived rates with score >= threshold as positive."""
    y = np.asarray(y_true)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1 or y.size == 0:
        raise ParameterError(f"labels {y.shape} and scores {s.shape} must be equal-length non-empty 1-D arrays")
    pred = s >= threshold
    pos = y == 1
    tp = int(np.sum(pred & pos))
    fp = int(np.sum(pred & ~pos))
    tn = int(np.sum(~pred & ~pos))
    fn = int(np.sum(~pred & pos))
    if tp + fn == 0:
        raise UndefinedMetricError("sensitivity undefined: no positive labels")
    if tn + fp == 0:
        raise UndefinedMetricError("specificity undefined: no negative labels")
    return {
        "tp": tp,
        "fp": fp,
        "tn": tn,
        "fn": fn,
        "accuracy": (tp + tn) / y.size,
        "sensitivity": tp / (tp + fn),
        "specificity": tn / (tn + fp),
    }


@dataclass
class MetricsReport:
    """Bundle of the four reported metrics; auroc is None for hard labels."""

    auroc: float | None
    accuracy: float
    sensitivity: float
    specificity: float
    threshold: float
    n_pos: int
    n_neg: int
    tp: int
    fp: int
    tn: int
    fn: int

    @classmethod
    def from_scores(cls, y_true, scores, threshold: float = 0.5, hard_labels: bool = False):
        """Compute all metrics from scores; hard labels skip AU-ROC.

        hard_labels means scores are 0/1 decisions with no ranking
        information, so AU-ROC would be misleading and is reported absent.
        """
        y = np.asarray(y_true)
        conf = confusion_at(y, scores, threshold)
        area = None if hard_labels else auroc(y, scores)
        return cls(
            auroc=area,
            accuracy=conf["accuracy"],
            sensitivity=conf["sensitivity"],
            specificity=conf["specificity"],
            threshold=threshold,
            n_pos=int(np.sum(y == 1)),
            n_neg=int(np.sum(y == 0)),
            tp=conf["tp"],
            fp=conf["fp"],
            tn=conf["tn"],
            fn=conf["fn"],
        )

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)
