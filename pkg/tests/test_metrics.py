import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadrcn.dataset import LABELS, POSITIVE_LABELS, RelationLabel as L
from cadrcn.metrics import evaluate_relations, evaluate_severity


def test_perfect():
    gold = list(LABELS) * 3
    m = evaluate_relations(gold, gold)
    assert m.micro_f1 == 1.0 and m.macro_f1 == 1.0
    assert all(s.f1 == 1.0 for s in m.per_class.values())
    assert "100.00" in m.table()


def test_all_no_relation():
    gold = list(POSITIVE_LABELS) * 2
    m = evaluate_relations([L.NO_RELATION] * len(gold), gold)
    assert m.micro_recall == 0.0 and m.micro_f1 == 0.0
    assert all(m.per_class[lab.tag].recall == 0.0 for lab in POSITIVE_LABELS)


def test_hand_counted_toy():
    gold = [L.MODIFIER, L.MODIFIER, L.NO_RELATION, L.NO_RELATION]
    pred = [L.MODIFIER, L.NO_RELATION, L.MODIFIER, L.NO_RELATION]
    m = evaluate_relations(pred, gold)
    s = m.per_class["modifier(e1,e2)"]
    assert (s.precision, s.recall, s.f1, s.support) == (0.5, 0.5, 0.5, 2)
    assert (m.micro_precision, m.micro_recall, m.micro_f1) == (0.5, 0.5, 0.5)
    assert m.confusion[0].tolist() == [1, 0, 0, 0, 0, 1]


def test_accepts_tags_and_ints():
    a = evaluate_relations(["modifier(e1,e2)", 5], [0, "no_relation"])
    assert a.micro_f1 == 1.0


def test_length_mismatch():
    with pytest.raises(ValueError):
        evaluate_relations([0, 1], [0])


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=60))
def test_micro_equals_pooled_counts(pairs):
    pred, gold = zip(*pairs)
    m = evaluate_relations(list(pred), list(gold))
    # independent pooling straight from the pairs
    tp = sum(p == g and g != 5 for p, g in pairs)
    n_pred = sum(p != 5 for p, _ in pairs)
    n_gold = sum(g != 5 for _, g in pairs)
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold if n_gold else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    assert m.micro_f1 == pytest.approx(f, abs=1e-12)
    # and from the per-class counts in the confusion matrix
    c = m.confusion
    tp2 = sum(c[j, j] for j in range(5))
    assert tp2 == tp and c[:, :5].sum() == n_pred and c[:5].sum() == n_gold
    np.testing.assert_array_equal(c.sum(axis=1), np.bincount(gold, minlength=6))
    for s in m.per_class.values():
        expected = 2 * s.precision * s.recall / (s.precision + s.recall) if s.precision + s.recall else 0.0
        assert s.f1 == pytest.approx(expected)


def test_severity_all_correct():
    m = evaluate_severity(["mild", "severe"], ["mild", "severe"])
    assert m.accuracy == 1.0
    assert "100.00" in m.table()


def test_severity_one_severe_missed():
    gold = ["severe"] * 10 + ["mild"] * 5
    pred = ["severe"] * 9 + ["moderate"] + ["mild"] * 5
    m = evaluate_severity(pred, gold)
    assert m.per_level["severe"].recall == pytest.approx(0.9)
    assert m.accuracy == pytest.approx(14 / 15)
    np.testing.assert_array_equal(m.confusion.sum(axis=1), [5, 0, 10])


def test_severity_rejects_unknown():
    with pytest.raises(ValueError, match="critical"):
        evaluate_severity(["critical"], ["mild"])
    with pytest.raises(ValueError):
        evaluate_severity(["mild"], [])
