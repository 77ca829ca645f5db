"""Classifier metrics: FPR, precision-recall curve and derived scores."""
from __future__ import annotations

import numpy as np


def confusion(y, pred) -> tuple[int, int, int, int]:
    """``(tp, fp, tn, fn)``."""
    y = np.asarray(y).astype(bool)
    pred = np.asarray(pred).astype(bool)
    return (int((y & pred).sum()), int((~y & pred).sum()), int((~y & ~pred).sum()),
            int((y & ~pred).sum()))


def false_positive_rate(y, pred) -> float:
    tp, fp, tn, fn = confusion(y, pred)
    if fp + tn == 0:
        raise ValueError("FPR undefined without negatives")
    return fp / (fp + tn)


def pr_curve(y, score) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Precision, recall and thresholds for ``score >= t`` over distinct scores.

    Thresholds descend and the curve stops at the first point with full recall.
    """
    y = np.asarray(y).astype(np.int64)
    score = np.asarray(score, dtype=float)
    if y.sum() == 0:
        raise ValueError("precision-recall curve needs at least one positive")
    order = np.argsort(-score, kind="stable")
    s = score[order]
    ys = y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp = np.cumsum(ys)[last]
    fp = (last + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / y.sum()
    stop = int(np.searchsorted(tp, tp[-1])) + 1
    return precision[:stop], recall[:stop], s[last][:stop]


def precision_at_recall(y, score, min_recall: float = 0.6) -> float:
    """Mean precision over curve points with recall above ``min_recall``."""
    p, r, _ = pr_curve(y, score)
    m = r > min_recall
    return float(p[m].mean()) if m.any() else 0.0


def alert_false_share(y, score, min_recall: float = 0.6) -> float:
    """Share of flagged rows that are negative at the strictest threshold reaching ``min_recall``.

    This is the alert-level false positive rate quoted for rule-based
    monitoring, ``FP / (FP + TP)``.
    """
    p, r, _ = pr_curve(y, score)
    i = int(np.flatnonzero(r >= min_recall)[0])
    return float(1.0 - p[i])


def evaluate_metrics(tree, X, y, min_recall: float = 0.6) -> dict:
    """FPR at 0.5, P@R above ``min_recall``, the curve, and the alert false share."""
    y = np.asarray(y)
    if (y == 0).sum() == 0:
        raise ValueError("FPR undefined without negatives")
    score = tree.predict_proba(X)
    out = {"fpr": false_positive_rate(y, score > 0.5)}
    if y.sum() > 0:
        p, r, t = pr_curve(y, score)
        out.update(p_at_r=precision_at_recall(y, score, min_recall),
                   alert_fpr=alert_false_share(y, score, min_recall),
                   curve=(p, r, t))
    else:
        out.update(p_at_r=0.0, alert_fpr=1.0, curve=(np.zeros(0), np.zeros(0), np.zeros(0)))
    return out
