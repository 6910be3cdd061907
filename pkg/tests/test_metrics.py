import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from liquidbench.metrics import cer, classify_metrics, confusion_matrix, corpus_cer, edit_distance

short_text = st.text(alphabet="abc", max_size=8)


def test_identical_sequences_have_zero_cer():
    assert cer("abc", "abc") == 0.0


def test_kitten_sitting():
    assert edit_distance("kitten", "sitting") == 3
    assert abs(cer("kitten", "sitting") - 3 / 7) < 1e-15


def test_empty_prediction_is_all_deletions():
    assert cer([], [1, 2, 3, 4]) == 1.0


def test_empty_reference_is_an_error():
    with pytest.raises(ValueError):
        cer("a", "")
    with pytest.raises(ValueError):
        corpus_cer(["a"], [""])


def test_corpus_cer_pools_lengths():
    assert corpus_cer(["ab", "x"], ["abc", "y"]) == 2 / 4


@given(short_text, short_text)
@settings(max_examples=200, deadline=None)
def test_edit_distance_properties(a, b):
    d = edit_distance(a, b)
    assert d == edit_distance(b, a)
    assert abs(len(a) - len(b)) <= d <= max(len(a), len(b))
    assert (d == 0) == (a == b)


@given(short_text, short_text, short_text)
@settings(max_examples=100, deadline=None)
def test_edit_distance_triangle(a, b, c):
    assert edit_distance(a, c) <= edit_distance(a, b) + edit_distance(b, c)


def test_perfect_predictions():
    r = classify_metrics([0, 1, 2, 1], [0, 1, 2, 1], 3)
    assert r.accuracy == 1.0 and r.f1 == 1.0 and r.degenerate == []


def test_binary_hand_computed_counts():
    # TP=1, FP=1, FN=3, TN=5
    targets = [1] + [0] + [1] * 3 + [0] * 5
    preds = [1] + [1] + [0] * 3 + [0] * 5
    r = classify_metrics(preds, targets, 2)
    assert r.precision == 0.5
    assert r.recall == 0.25
    assert abs(r.f1 - 1 / 3) < 1e-15
    assert r.accuracy == 0.6
    assert r.false_positives == 1
    assert r.confusion == [[5, 1], [3, 1]]


def test_all_negative_predictions_use_zero_convention():
    r = classify_metrics([0] * 10, [1] + [0] * 9, 2)
    assert r.recall == 0.0 and r.precision == 0.0 and r.f1 == 0.0
    assert r.degenerate == ["precision"]
    assert r.accuracy == 0.9


def test_macro_average_flags_absent_classes():
    r = classify_metrics([0, 0, 1], [0, 0, 1], 3)
    assert "precision[2]" in r.degenerate and "recall[2]" in r.degenerate
    assert abs(r.precision - 2 / 3) < 1e-15


def test_invalid_label_inputs():
    with pytest.raises(ValueError):
        classify_metrics([0, 3], [0, 1], 3)
    with pytest.raises(ValueError):
        classify_metrics([0, 1], [0], 2)


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=50))
@settings(max_examples=100, deadline=None)
def test_confusion_invariants(pairs):
    preds, targets = zip(*pairs)
    cm = confusion_matrix(preds, targets, 4)
    assert cm.sum() == len(pairs)
    assert np.array_equal(cm.sum(axis=1), np.bincount(targets, minlength=4))
    assert np.array_equal(cm.sum(axis=0), np.bincount(preds, minlength=4))
    r = classify_metrics(preds, targets, 4)
    assert r.accuracy == np.trace(cm) / len(pairs)
    assert 0.0 <= r.precision <= 1.0 and 0.0 <= r.recall <= 1.0 and 0.0 <= r.f1 <= 1.0
