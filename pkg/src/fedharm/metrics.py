"""Evaluation metrics: ROC AUC (Mann-Whitney with midranks) and weighted P/R/F1.

For a binary task the one-vs-rest AUC of either class equals the plain
binary AUC, so the support-weighted AUC reported by common tooling is the
same number as ``roc_auc``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    auc: float
    accuracy: float
    precision_weighted: float
    recall_weighted: float
    f1_weighted: float
    precision_harmful: float
    recall_harmful: float
    f1_harmful: float
    n_examples: int
    threshold: float = 0.5

    def as_dict(self) -> dict:
        return asdict(self)


METRIC_NAMES = (
    "auc", "accuracy", "precision_weighted", "recall_weighted", "f1_weighted",
    "precision_harmful", "recall_harmful", "f1_harmful",
)


def roc_auc(scores, labels) -> float:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    if s.shape != y.shape:
        raise MetricError("scores and labels differ in length")
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC is undefined when only one class is present")
    ranks = rankdata(s, method="average")
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _div(a: float, b: float) -> float:
    return a / b if b else 0.0


def confusion(scores, labels, threshold: float = 0.5) -> dict[str, int]:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(bool)
    pred = s >= threshold
    return {
        "tp": int(np.sum(pred & y)),
        "fp": int(np.sum(pred & ~y)),
        "fn": int(np.sum(~pred & y)),
        "tn": int(np.sum(~pred & ~y)),
    }


def prf_from_confusion(tp: int, fp: int, fn: int, tn: int) -> dict[str, float]:
    """Per-class precision/recall/F1 (0/0 -> 0) and their support-weighted averages."""
    n = tp + fp + fn + tn
    per_class = {}
    # harmful (positive) class, then normal class with the roles swapped
    for name, t_p, f_p, f_n in (("harmful", tp, fp, fn), ("normal", tn, fn, fp)):
        p = _div(t_p, t_p + f_p)
        r = _div(t_p, t_p + f_n)
        per_class[name] = (p, r, _div(2 * p * r, p + r), t_p + f_n)
    out = {"accuracy": _div(tp + tn, n)}
    for k, key in enumerate(("precision", "recall", "f1")):
        out[f"{key}_weighted"] = _div(sum(v[k] * v[3] for v in per_class.values()), n)
        out[f"{key}_harmful"] = per_class["harmful"][k]
    return out


def confusion_and_prf(scores, labels, threshold: float = 0.5) -> dict[str, float]:
    if len(scores) == 0:
        raise MetricError("cannot compute metrics on an empty set")
    if not 0.0 < threshold < 1.0:
        raise MetricError(f"threshold must be in (0, 1), got {threshold}")
    return prf_from_confusion(**confusion(scores, labels, threshold))


def evaluate_scores(probs, labels, threshold: float = 0.5) -> EvalReport:
    prf = confusion_and_prf(probs, labels, threshold)
    return EvalReport(auc=roc_auc(probs, labels), n_examples=len(labels), threshold=threshold, **prf)
