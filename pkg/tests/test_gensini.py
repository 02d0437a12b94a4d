import logging

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadrcn.dataset import RelationLabel as L
from cadrcn.gensini import (
    LesionError, LesionRecord, aggregate_lesions, lesion_score, score_document, severity_level, total_and_classify,
)
from cadrcn.text import Entity


def _table(d: int) -> int:
    """The integer lesion-score table, written independently as explicit ranges."""
    if d == 0:
        return 0
    if d in range(1, 50):
        return 1
    if d in range(50, 75):
        return 2
    if d in range(75, 100):
        return 3
    return 4


def test_lesion_score_exhaustive():
    for d in range(101):
        assert lesion_score(d) == _table(d), d


@pytest.mark.parametrize("d, s", [(0.5, 0), (49.5, 1), (74.9, 2), (99.99, 3), (40, 1), (100, 4)])
def test_fractional_bands(d, s):
    assert lesion_score(d) == s


@pytest.mark.parametrize("d", [-1, 100.01, 150])
def test_lesion_score_range(d):
    with pytest.raises(ValueError):
        lesion_score(d)


@pytest.mark.parametrize("total, level", [(0, "mild"), (7, "mild"), (8, "moderate"), (14, "moderate"),
                                          (15, "severe"), (40, "severe")])
def test_thresholds(total, level):
    assert severity_level(total) == level


@pytest.mark.parametrize("diams, total, level", [((40,), 1, "mild"), ((100, 100), 8, "moderate"),
                                                 ((100, 100, 100, 80), 15, "severe")])
def test_total_and_classify(diams, total, level):
    recs = [LesionRecord(f"L{k}", "left" if k % 2 else "right", d) for k, d in enumerate(diams)]
    rep = total_and_classify(recs)
    assert (rep.total, rep.level) == (total, level)
    assert rep.left_total + rep.right_total == rep.total


def test_example_document(example, zh):
    _, ents, triples = example
    report = score_document(triples, zh, ents)
    diam = {r.lumen: r.diameter for r in report.lesions}
    assert diam == {"左前降支": 40.0, "右前降支": 0.0, "右回旋支": 0.0}
    assert (report.total, report.level) == (1, "mild")
    assert (report.left_total, report.right_total) == (1, 0)


def _lumen(i, s="左前降支"):
    return Entity(i, i, "Lumen", s)


def _mod(i, s="狭窄"):
    return Entity(i, i, "Modifier", s)


def _pct(i, v):
    return Entity(i, i, "Percentage", f"{v}%")


def test_max_rule_and_alias(zh):
    a, m1, p1 = _lumen(0), _mod(2), _pct(1, 30)
    b, m2, p2 = _lumen(4, "前降支"), _mod(5), _pct(6, 80)
    triples = [(a, L.MODIFIER, m1), (p1, L.PERCENTAGE_E2E1, m1), (b, L.MODIFIER, m2), (m2, L.PERCENTAGE_E1E2, p2)]
    (rec,) = aggregate_lesions(triples, zh)
    assert rec.lumen == "左前降支" and rec.diameter == 80.0 and rec.score == 3


def test_occlusion_and_normal(zh):
    occ = aggregate_lesions([(_lumen(0, "右冠状动脉"), L.MODIFIER, _mod(1, "闭塞"))], zh)
    assert occ[0].diameter == 100.0 and occ[0].side == "right"
    norm = aggregate_lesions([(_lumen(0), L.MODIFIER, _mod(1, "正常"))], zh)
    assert norm[0].diameter == 0.0


def test_bare_stenosis_warns(zh, caplog):
    with caplog.at_level(logging.WARNING):
        (rec,) = aggregate_lesions([(_lumen(0), L.MODIFIER, _mod(1))], zh)
    assert rec.diameter == 0.0
    assert "no linked percentage" in caplog.text


def test_out_of_range_percentage(zh):
    bad = _pct(1, 150)
    with pytest.raises(LesionError, match="150%"):
        aggregate_lesions([(_lumen(0), L.MODIFIER, _mod(2)), (bad, L.PERCENTAGE_E2E1, _mod(2))], zh)


def test_mistyped_triples_ignored(zh):
    triples = [(_mod(0), L.MODIFIER, _lumen(1))]
    assert aggregate_lesions(triples, zh) == []


def _doc(diameters, negated):
    """One clause per lumen: lumen, pct, stenosis, with optional negation."""
    lumens = ["左主干", "左前降支", "左回旋支", "右冠状动脉"]
    triples, pos = [], 0
    for name, d, neg in zip(lumens, diameters, negated):
        lum, pct, mod = _lumen(pos, name), _pct(pos + 1, d), _mod(pos + 2)
        triples += [(lum, L.MODIFIER, mod), (pct, L.PERCENTAGE_E2E1, mod)]
        if neg:
            triples.append((Entity(pos + 3, pos + 3, "Negative", "未见"), L.NEGATIVE, mod))
        pos += 5
    return triples


_levels = {"mild": 0, "moderate": 1, "severe": 2}


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 100), min_size=4, max_size=4), st.integers(0, 3), st.integers(1, 100))
def test_monotone_in_diameter(zh, diams, which, bump):
    before = score_document(_doc(diams, [False] * 4), zh)
    raised = list(diams)
    raised[which] = max(raised[which], bump)
    after = score_document(_doc(raised, [False] * 4), zh)
    assert after.total >= before.total
    assert _levels[after.level] >= _levels[before.level]


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 100), min_size=4, max_size=4), st.lists(st.booleans(), min_size=4, max_size=4))
def test_negation_dominance(zh, diams, negated):
    rep = score_document(_doc(diams, negated), zh)
    expected = sum(_table(d) for d, n in zip(diams, negated) if not n)
    assert rep.total == expected
