"""Evaluation metrics: rank correlation, range-normalized error, binary heads.

Scores are compared by Spearman correlation (Pearson over average-tied ranks)
and by a mean squared error normalized by the ground-truth score range and
scaled by 100.  The binary success/source heads report accuracy, F1, and AUC
as percentages, with AUC computed as the exact pairwise ranking statistic
(ties count one half).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


def average_ranks(values) -> np.ndarray:
    """Ascending ranks 1..N with tied values assigned their average rank."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValidationError("ranks are defined for 1-D vectors only")
    order = np.argsort(v, kind="stable")
    ranks = np.empty(len(v), dtype=float)
    sorted_v = v[order]
    i = 0
    while i < len(v):
        j = i
        while j + 1 < len(v) and sorted_v[j + 1] == sorted_v[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def srcc(ground, predicted) -> float:
    """Spearman rank correlation: Pearson correlation of the rank vectors."""
    g = np.asarray(ground, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if g.shape != p.shape or g.ndim != 1:
        raise ValidationError("score vectors must be 1-D and equal length")
    if len(g) < 2:
        raise ValidationError("need at least 2 score pairs")
    rg = average_ranks(g)
    rp = average_ranks(p)
    dg = rg - rg.mean()
    dp = rp - rp.mean()
    denom = np.sqrt(np.sum(dg * dg) * np.sum(dp * dp))
    if denom == 0.0:
        raise ValidationError("rank correlation undefined for a constant vector")
    return float(np.sum(dg * dp) / denom)


def relative_l2(ground, predicted) -> float:
    """Mean squared error normalized by the ground-truth range, times 100."""
    g = np.asarray(ground, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if g.shape != p.shape or g.ndim != 1 or len(g) == 0:
        raise ValidationError("score vectors must be 1-D and equal length")
    span = g.max() - g.min()
    if span == 0.0:
        raise ValidationError("ground-truth score range is zero")
    return float(100.0 * np.mean(((g - p) / span) ** 2))


@dataclass(frozen=True)
class BinaryHeadReport:
    """Accuracy, F1, and AUC for one binary head, all as percentages."""

    acc: float
    f1: float
    auc: float


def binary_metrics(labels, probabilities, threshold: float = 0.5) -> BinaryHeadReport:
    """Accuracy/F1 after thresholding plus threshold-free pairwise AUC.

    Probabilities at or above the threshold count as positive predictions.
    AUC needs both classes present; F1 is 0 when precision + recall is 0.
    """
    y = np.asarray(labels, dtype=bool)
    p = np.asarray(probabilities, dtype=float)
    if y.shape != p.shape or y.ndim != 1 or len(y) == 0:
        raise ValidationError("labels and probabilities must be 1-D, equal length, nonempty")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValidationError("probabilities must lie in [0, 1]")

    pred = p >= threshold
    acc = float(np.mean(pred == y))

    tp = int(np.sum(pred & y))
    fp = int(np.sum(pred & ~y))
    fn = int(np.sum(~pred & y))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall else 0.0

    n_pos = int(np.sum(y))
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValidationError("AUC undefined: only one class present")
    # Mann-Whitney via average ranks; equivalent to counting concordant pairs
    # with ties worth 0.5 each.
    ranks = average_ranks(p)
    u = float(np.sum(ranks[y])) - n_pos * (n_pos + 1) / 2.0
    auc = u / (n_pos * n_neg)

    return BinaryHeadReport(acc=100.0 * acc, f1=100.0 * f1, auc=100.0 * auc)


@dataclass(frozen=True)
class MetricsReport:
    """One row of the evaluation table: score metrics plus one binary head."""

    srcc: float
    r_l2: float
    acc: float
    f1: float
    auc: float


def render_report_table(rows: dict[str, MetricsReport]) -> str:
    """Fixed-width table with the standard column order."""
    header = f"{'head':<12} {'SRCC':>8} {'R_l2':>8} {'Acc':>8} {'F1(%)':>8} {'AUC(%)':>8}"
    lines = [header, "-" * len(header)]
    for name, r in rows.items():
        lines.append(
            f"{name:<12} {r.srcc:>8.4f} {r.r_l2:>8.3f} {r.acc:>8.2f} {r.f1:>8.2f} {r.auc:>8.2f}"
        )
    return "\n".join(lines) + "\n"
