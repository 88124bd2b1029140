import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from poison_scan import EvalReport, auc, evaluate, fpr_at_tpr, threshold_sweep
from poison_scan.errors import CountMismatch, DegenerateLabels
from poison_scan.store import Detector, LabelVector, ScoreVector

import oracle


@pytest.mark.parametrize(
    "scores, labels, expected",
    [
        ([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], 1.0),
        ([0.5, 0.5], [1, 0], 0.5),
        ([0.9, 0.4, 0.6, 0.1], [1, 0, 0, 1], 0.5),
    ],
)
def test_auc_examples(scores, labels, expected):
    assert auc(scores, labels) == expected


def test_degenerate_labels():
    with pytest.raises(DegenerateLabels):
        auc([1.0, 2.0], [0, 0])
    with pytest.raises(DegenerateLabels):
        fpr_at_tpr([1.0, 2.0], [1, 1])
    with pytest.raises(CountMismatch):
        auc([1.0, 2.0, 3.0], [0, 1])


def test_fpr_examples():
    assert fpr_at_tpr([0.9, 0.8, 0.1, 0.7], [1, 1, 0, 0], 0.95) == 0.0
    assert fpr_at_tpr([0.9, 0.95], [1, 0], 0.95) == 1.0
    assert fpr_at_tpr([3.0, 2.0, 1.0], [1, 0, 0]) == 0.0


score_lists = st.lists(st.integers(0, 6).map(float), min_size=2, max_size=40)


@settings(max_examples=150, deadline=None)
@given(st.data())
def test_auc_and_fpr_match_brute_force(data):
    scores = data.draw(score_lists)
    labels = data.draw(st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores)))
    if len(set(labels)) < 2:
        return
    assert auc(scores, labels) == pytest.approx(oracle.brute_auc(scores, labels), abs=1e-12)
    for target in (0.0, 0.5, 0.95, 1.0):
        assert fpr_at_tpr(scores, labels, target) == oracle.brute_fpr_at_tpr(scores, labels, target)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_auc_invariant_under_monotone_transform(seed):
    rng = np.random.default_rng(seed)
    s = rng.normal(size=60)
    y = np.r_[1, 0, rng.integers(0, 2, 58)]
    assert auc(np.exp(3 * s) + 2, y) == auc(s, y)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fpr_nonincreasing_in_leniency(seed):
    rng = np.random.default_rng(seed)
    s = rng.integers(0, 10, size=50).astype(float)
    y = np.r_[1, 0, rng.integers(0, 2, 48)]
    targets = np.linspace(0, 1, 21)
    fprs = [fpr_at_tpr(s, y, t) for t in targets]
    assert fprs[0] == 0.0
    assert all(a <= b for a, b in zip(fprs, fprs[1:]))


def test_sweep_two_points():
    rows = threshold_sweep([0.9, 0.1], [1, 0])
    assert any(0.1 < t < 0.9 and tpr == 1.0 and fpr == 0.0 for t, tpr, fpr in rows)


def test_sweep_all_equal():
    rows = threshold_sweep([2.0] * 5, [1, 0, 0, 1, 0])
    assert all((tpr, fpr) in {(1.0, 1.0), (0.0, 0.0)} for _, tpr, fpr in rows)


def test_sweep_matches_confusion_matrix(rng):
    s = rng.normal(size=100)
    y = rng.integers(0, 2, size=100)
    rows = threshold_sweep(s, y)
    thresholds = [t for t, _, _ in rows]
    assert thresholds == sorted(thresholds)
    tprs = [tpr for _, tpr, _ in rows]
    assert all(a >= b for a, b in zip(tprs, tprs[1:]))
    for t, tpr, fpr in rows:
        tp = sum(1 for v, lab in zip(s, y) if lab == 1 and v >= t)
        fp = sum(1 for v, lab in zip(s, y) if lab == 0 and v >= t)
        assert tpr == tp / y.sum()
        assert fpr == fp / (len(y) - y.sum())
    # removal percentiles used for filtering
    for p in (1, 5, 10):
        assert np.percentile(s, 100 - p) in thresholds


def test_eval_report_json():
    report = evaluate(ScoreVector([0.9, 0.1, 0.2], Detector.DAO), LabelVector(np.array([1, 0, 0])), 1.5)
    fields = json.loads(report.to_json())
    assert list(fields) == ["auc", "fpr_at_95_tpr", "n_clean", "n_backdoor", "detector", "wall_time_seconds"]
    assert fields["auc"] == 1.0 and fields["n_backdoor"] == 1 and fields["detector"] == "dao"
    assert isinstance(report, EvalReport)
