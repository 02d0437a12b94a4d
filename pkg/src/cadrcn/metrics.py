"""Precision/recall/F1 for relations and severity levels."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import LABELS, POSITIVE_LABELS, RelationLabel
from .gensini import LEVELS


@dataclass
class ClassScore:
    precision: float
    recall: float
    f1: float
    support: int


def _prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return p, r, f


@dataclass
class RelationMetrics:
    per_class: dict[str, ClassScore]
    micro_precision: float
    micro_recall: float
    micro_f1: float
    macro_f1: float
    confusion: np.ndarray  # rows gold, columns predicted, in label order

    def to_record(self) -> dict:
        return {
            "per_class": {k: vars(v) for k, v in self.per_class.items()},
            "micro": {"precision": self.micro_precision, "recall": self.micro_recall, "f1": self.micro_f1},
            "macro_f1": self.macro_f1,
            "labels": [lab.tag for lab in LABELS],
            "confusion": self.confusion.tolist(),
        }

    def table(self) -> str:
        lines = [f"{'relation':<20}{'P':>8}{'R':>8}{'F1':>8}{'n':>7}"]
        for name, s in self.per_class.items():
            lines.append(f"{name:<20}{100 * s.precision:8.2f}{100 * s.recall:8.2f}{100 * s.f1:8.2f}{s.support:7d}")
        lines.append(
            f"{'micro (positive)':<20}{100 * self.micro_precision:8.2f}{100 * self.micro_recall:8.2f}"
            f"{100 * self.micro_f1:8.2f}"
        )
        lines.append(f"{'macro (positive)':<20}{'':16}{100 * self.macro_f1:8.2f}")
        return "\n".join(lines)


def _as_index(labels) -> np.ndarray:
    return np.array([int(RelationLabel.parse(x) if isinstance(x, str) else x) for x in labels], dtype=np.intp)


def evaluate_relations(predictions: Sequence, gold: Sequence) -> RelationMetrics:
    """Per-class scores plus micro/macro averages over the five positive classes.

    no_relation is the null class: predicting it never counts as a positive,
    so a positive gold instance predicted as no_relation is only a miss.
    """
    if len(predictions) != len(gold):
        raise ValueError(f"{len(predictions)} predictions for {len(gold)} gold labels")
    pred, true = _as_index(predictions), _as_index(gold)
    k = len(LABELS)
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    per_class = {}
    for lab in LABELS:
        j = int(lab)
        tp = int(confusion[j, j])
        fp = int(confusion[:, j].sum()) - tp
        fn = int(confusion[j, :].sum()) - tp
        per_class[lab.tag] = ClassScore(*_prf(tp, fp, fn), support=int(confusion[j, :].sum()))
    pos = [int(lab) for lab in POSITIVE_LABELS]
    tp = int(sum(confusion[j, j] for j in pos))
    fp = int(sum(confusion[:, j].sum() - confusion[j, j] for j in pos))
    fn = int(sum(confusion[j, :].sum() - confusion[j, j] for j in pos))
    mp, mr, mf = _prf(tp, fp, fn)
    macro = float(np.mean([per_class[lab.tag].f1 for lab in POSITIVE_LABELS]))
    return RelationMetrics(per_class, mp, mr, mf, macro, confusion)


@dataclass
class SeverityMetrics:
    per_level: dict[str, ClassScore]
    accuracy: float
    confusion: np.ndarray = field(repr=False)  # rows gold, columns predicted: mild, moderate, severe

    def to_record(self) -> dict:
        return {
            "per_level": {k: vars(v) for k, v in self.per_level.items()},
            "accuracy": self.accuracy,
            "levels": list(LEVELS),
            "confusion": self.confusion.tolist(),
        }

    def table(self) -> str:
        lines = [f"{'level':<18}{'P':>8}{'R':>8}{'F1':>8}{'n':>6}"]
        for name, s in self.per_level.items():
            lines.append(f"{name:<18}{100 * s.precision:8.2f}{100 * s.recall:8.2f}{100 * s.f1:8.2f}{s.support:6d}")
        lines.append(f"{'overall accuracy':<18}{100 * self.accuracy:8.2f}")
        return "\n".join(lines)


def evaluate_severity(predicted_levels: Sequence[str], gold_levels: Sequence[str]) -> SeverityMetrics:
    if len(predicted_levels) != len(gold_levels):
        raise ValueError(f"{len(predicted_levels)} predicted levels for {len(gold_levels)} gold levels")
    for lvl in list(predicted_levels) + list(gold_levels):
        if lvl not in LEVELS:
            raise ValueError(f"unknown severity level {lvl!r}")
    k = len(LEVELS)
    confusion = np.zeros((k, k), dtype=np.int64)
    for p, g in zip(predicted_levels, gold_levels):
        confusion[LEVELS.index(g), LEVELS.index(p)] += 1
    per_level = {}
    for j, name in enumerate(LEVELS):
        tp = int(confusion[j, j])
        per_level[name] = ClassScore(
            *_prf(tp, int(confusion[:, j].sum()) - tp, int(confusion[j, :].sum()) - tp),
            support=int(confusion[j, :].sum()),
        )
    n = int(confusion.sum())
    accuracy = float(np.trace(confusion)) / n if n else 0.0
    return SeverityMetrics(per_level, accuracy, confusion)
