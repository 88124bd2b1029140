"""Detection quality: ROC AUC, FPR at a target TPR, threshold sweeps.

A sample is flagged when ``score >= t``.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from .errors import CountMismatch, DegenerateLabels
from .store import LabelVector, ScoreVector, unwrap


@dataclass
class EvalReport:
    auc: float
    fpr_at_95_tpr: float
    n_clean: int
    n_backdoor: int
    detector: str
    wall_time_seconds: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def _split(scores, labels):
    s = np.asarray(unwrap(scores), dtype=np.float64)
    y = np.asarray(unwrap(labels)).astype(bool)
    if s.shape != y.shape:
        raise CountMismatch(f"{s.size} scores but {y.size} labels")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == y.size:
        raise DegenerateLabels("need at least one backdoor and one clean label")
    return s, y


def auc(scores, labels) -> float:
    """Mann-Whitney AUC with average ranks for ties."""
    s, y = _split(scores, labels)
    ranks = rankdata(s, method="average")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _counts_at_or_above(s, y):
    """Distinct thresholds (descending, with +inf first) and TP/FP counts at each."""
    order = np.argsort(-s, kind="stable")
    s_sorted = s[order]
    y_sorted = y[order]
    tp = np.cumsum(y_sorted)
    fp = np.cumsum(~y_sorted)
    # last position of each distinct score value
    last = np.flatnonzero(np.r_[s_sorted[1:] != s_sorted[:-1], True])
    thresholds = np.r_[np.inf, s_sorted[last]]
    return thresholds, np.r_[0, tp[last]], np.r_[0, fp[last]]


def fpr_at_tpr(scores, labels, target_tpr: float = 0.95) -> float:
    """FPR at the largest threshold whose TPR reaches ``target_tpr``."""
    s, y = _split(scores, labels)
    thresholds, tp, fp = _counts_at_or_above(s, y)
    tpr = tp / y.sum()
    first = int(np.flatnonzero(tpr >= target_tpr)[0])
    return float(fp[first] / (~y).sum())


def default_removal_grid() -> list[float]:
    return [float(p) for p in range(0, 101)]


def threshold_sweep(scores, labels, grid=None) -> list[tuple[float, float, float]]:
    """(threshold, tpr, fpr) at score percentiles, ascending in threshold.

    ``grid`` lists removal percentages: ``p`` places the threshold at the
    ``100 - p`` percentile of the scores (linear interpolation), so p = 10
    corresponds to removing the top 10%.
    """
    s, y = _split(scores, labels)
    grid = default_removal_grid() if grid is None else grid
    thresholds = np.percentile(s, [100.0 - p for p in grid])
    n_pos = y.sum()
    n_neg = y.size - n_pos
    rows = []
    for t in np.unique(thresholds):
        flagged = s >= t
        rows.append((float(t), float((flagged & y).sum() / n_pos), float((flagged & ~y).sum() / n_neg)))
    return rows


def evaluate(scores: ScoreVector, labels: LabelVector, wall_time_seconds: float = 0.0) -> EvalReport:
    y = np.asarray(labels.flags)
    return EvalReport(
        auc=auc(scores, labels),
        fpr_at_95_tpr=fpr_at_tpr(scores, labels, 0.95),
        n_clean=int((y == 0).sum()),
        n_backdoor=int((y == 1).sum()),
        detector=scores.detector.name.lower(),
        wall_time_seconds=float(wall_time_seconds),
    )
