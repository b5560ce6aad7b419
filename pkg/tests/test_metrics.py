import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sensr import metrics, models


def confusion_fixture():
    """Class 0: group 0 recalls 9/10, group 1 recalls 7/10 (pooled 0.8).
    Class 1: group 0 recalls 2/4, group 1 recalls 3/6 (pooled 0.5)."""
    labels = np.array([0] * 20 + [1] * 10)
    group = np.array([0] * 10 + [1] * 10 + [0] * 4 + [1] * 6)
    preds = np.array([0] * 9 + [1] + [0] * 7 + [1] * 3 + [1, 1, 0, 0] + [1, 1, 1, 0, 0, 0])
    return preds, labels, group


def test_fixture_balanced_accuracy():
    preds, labels, _ = confusion_fixture()
    assert abs(metrics.balanced_accuracy(preds, labels) - 0.65) < 1e-12


def test_fixture_tpr_gaps():
    preds, labels, group = confusion_fixture()
    g = metrics.tpr_gaps(preds, labels, group)
    assert abs(g.gap_rms - np.sqrt(0.02)) < 1e-12
    assert abs(g.gap_max - 0.2) < 1e-12
    assert abs(g.per_class[1]) < 1e-12


def test_accuracy():
    assert metrics.accuracy([0, 1, 1, 0], [0, 1, 0, 0]) == 0.75


def test_empty_group_gives_nan_and_warns():
    with pytest.warns(UserWarning, match="undefined"):
        g = metrics.tpr_gaps([0, 1, 1], [0, 1, 1], [0, 0, 1])
    assert np.isnan(g.per_class[0])
    assert g.gap_max == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=60))
def test_balanced_accuracy_bounds(pairs):
    preds, labels = map(np.array, zip(*pairs))
    b = metrics.balanced_accuracy(preds, labels)
    assert 0.0 <= b <= 1.0
    if np.all(preds == labels):
        assert b == 1.0


def test_consistency_counts_agreeing_rows():
    p = models.ModelParams("logistic", {"W": np.array([[1.0, -1.0], [0.0, 0.0]]), "b": np.zeros(2)})

    def flip_second(X):
        return [X, X * [1.0, -1.0]]

    # rows only differ in the ignored coordinate: all consistent
    assert metrics.consistency(p, np.random.default_rng(0).standard_normal((10, 2)), flip_second) == 1.0

    def flip_first(X):
        return [X, X * [-1.0, 1.0]]

    assert metrics.consistency(p, np.array([[1.0, 0.0], [2.0, 5.0]]), flip_first) == 0.0


def test_group_logit_gap():
    p = models.ModelParams("logistic", {"W": np.array([[0.0, 1.0]]), "b": np.zeros(2)})
    assert metrics.group_logit_gap(p, [[2.0], [4.0]], [[1.0]]) == pytest.approx(2.0)


def test_eval_report_table():
    rep = metrics.EvalReport(0.8, 0.789, {"gender": {"gap_rms": 0.068, "gap_max": 0.087}}, 0.934, 0.984)
    head, row = rep.table().splitlines()
    assert "B-Acc,%" in head and "GR-Con." in head and "Gap_gender^RMS" in head
    assert "78.9" in row and ".934" in row and ".984" in row
