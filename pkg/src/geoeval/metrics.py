"""ROC/AUC, RMSE and dissimilarity binning."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .exceptions import RangeError, UndefinedAUCError

CV_METHODS = ("rdm", "blk", "sp")


@dataclass(frozen=True)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def _check_binary(labels, scores):
    y = np.asarray(labels)
    s = np.asarray(scores, dtype=np.float64)
    if y.shape != s.shape or y.ndim != 1:
        raise ValueError(f"labels {y.shape} and scores {s.shape} must be equal-length 1-D")
    y = y.astype(bool) if y.dtype == bool else (y == 1)
    n_pos = int(y.sum())
    n_neg = len(y) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError("AUC undefined: labels contain a single class")
    return y, s, n_pos, n_neg


def roc_curve(labels, scores) -> RocCurve:
    """ROC points at every distinct score threshold, from (0, 0) to (1, 1).

    Tied scores move FPR and TPR together, giving the diagonal segment that
    corresponds to half credit for tied pairs.
    """
    y, s, n_pos, n_neg = _check_binary(labels, scores)
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    # last index of each run of equal scores
    ends = np.flatnonzero(np.diff(s_sorted) != 0)
    ends = np.r_[ends, len(s_sorted) - 1]
    tps = np.cumsum(y_sorted)[ends]
    fps = (ends + 1) - tps
    tpr = np.r_[0, tps] / n_pos
    fpr = np.r_[0, fps] / n_neg
    thr = np.r_[np.inf, s_sorted[ends]]
    return RocCurve(fpr.astype(np.float64), tpr.astype(np.float64), thr)


def roc_auc(labels, scores) -> float:
    """Area under the ROC curve by the trapezoidal rule.

    Equals ``(concordant + 0.5 * tied) / (n_pos * n_neg)``. Raises
    :class:`UndefinedAUCError` if only one class is present.

    The area is accumulated in integer pair counts so the result is exact up
    to the final division.
    """
    y, s, n_pos, n_neg = _check_binary(labels, scores)
    order = np.argsort(-s, kind="mergesort")
    s_sorted = s[order]
    y_sorted = y[order]
    ends = np.r_[np.flatnonzero(np.diff(s_sorted) != 0), len(s_sorted) - 1]
    tps = np.r_[0, np.cumsum(y_sorted, dtype=np.int64)[ends]]
    fps = np.r_[0, (ends + 1) - tps[1:]]
    # 2 * trapezoid area in units of (1/n_neg) x (1/n_pos)
    twice = int(np.sum(np.diff(fps) * (tps[1:] + tps[:-1])))
    return twice / (2.0 * n_pos * n_neg)


def auc_pair_count(labels, scores) -> float:
    """Brute-force Mann-Whitney AUC over all positive-negative pairs."""
    y, s, n_pos, n_neg = _check_binary(labels, scores)
    pos = s[y]
    neg = s[~y]
    greater = int((pos[:, None] > neg[None, :]).sum())
    ties = int((pos[:, None] == neg[None, :]).sum())
    return (greater + 0.5 * ties) / (n_pos * n_neg)


def rmse(truth, pred) -> float:
    t = np.asarray(truth, dtype=np.float64).reshape(-1)
    p = np.asarray(pred, dtype=np.float64).reshape(-1)
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {p.shape}")
    if t.size == 0:
        raise ValueError("rmse of empty input")
    if not (np.isfinite(t).all() and np.isfinite(p).all()):
        raise ValueError("rmse inputs must be finite")
    return float(np.sqrt(np.mean((t - p) ** 2)))


def rmse_diff(rmse_actual: float, rmse_cv: float) -> float:
    """Actual minus CV-estimated error: > 0 is optimistic CV, < 0 pessimistic."""
    return rmse_actual - rmse_cv


@dataclass(frozen=True)
class BinnedRecord:
    bin_low: float
    bin_high: float
    count: int
    mean_abs_rmse_diff: Mapping[str, float] = field(default_factory=dict)


def bin_abs_diff(records: Iterable[tuple[float, Mapping[str, float]]], width: float = 1.0,
                 methods: Sequence[str] = CV_METHODS) -> list[BinnedRecord]:
    """Average ``|rmse_diff|`` per method inside dissimilarity bins of ``width`` percent.

    Bins are ``[lo, lo + width)`` except the last, which is closed at 100.
    Empty bins are omitted.
    """
    n_bins = int(math.ceil(100.0 / width))
    sums: dict[int, dict[str, float]] = {}
    counts: dict[int, int] = {}
    for d, diffs in records:
        d = float(d)
        if not (0.0 <= d <= 100.0):
            raise RangeError(f"dissimilarity {d} outside [0, 100]")
        b = min(int(math.floor(d / width)), n_bins - 1)
        acc = sums.setdefault(b, {m: 0.0 for m in methods})
        for m in methods:
            acc[m] += abs(float(diffs[m]))
        counts[b] = counts.get(b, 0) + 1
    out = []
    for b in sorted(counts):
        c = counts[b]
        out.append(BinnedRecord(b * width, min((b + 1) * width, 100.0), c,
                                {m: sums[b][m] / c for m in methods}))
    return out
