"""Relation instances: candidate pairs, five-segment splits, balancing and splitting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .text import Entity, type_tags as _type_tags


class RelationLabel(IntEnum):
    """Relation classes; the integer value is the output-capsule index."""

    MODIFIER = 0  # modifier(e1,e2): Lumen -> Modifier
    NEGATIVE = 1  # negative(e2,e1): Negative -> Modifier
    POSITION = 2  # position(e1,e2): Lumen -> Position
    PERCENTAGE_E1E2 = 3  # percentage(e1,e2): Modifier then Percentage
    PERCENTAGE_E2E1 = 4  # percentage(e2,e1): Percentage then Modifier
    NO_RELATION = 5

    @property
    def tag(self) -> str:
        return _TAGS[self]

    @classmethod
    def parse(cls, tag: str) -> "RelationLabel":
        try:
            return _BY_TAG[tag]
        except KeyError:
            raise ValueError(f"unknown relation label {tag!r}") from None


_TAGS = {
    RelationLabel.MODIFIER: "modifier(e1,e2)",
    RelationLabel.NEGATIVE: "negative(e2,e1)",
    RelationLabel.POSITION: "position(e1,e2)",
    RelationLabel.PERCENTAGE_E1E2: "percentage(e1,e2)",
    RelationLabel.PERCENTAGE_E2E1: "percentage(e2,e1)",
    RelationLabel.NO_RELATION: "no_relation",
}
_BY_TAG = {v: k for k, v in _TAGS.items()}

LABELS = tuple(RelationLabel)
POSITIVE_LABELS = LABELS[:-1]

# argument types (earlier entity, later entity) each positive label licenses
SIGNATURES = {
    RelationLabel.MODIFIER: ("Lumen", "Modifier"),
    RelationLabel.NEGATIVE: ("Negative", "Modifier"),
    RelationLabel.POSITION: ("Lumen", "Position"),
    RelationLabel.PERCENTAGE_E1E2: ("Modifier", "Percentage"),
    RelationLabel.PERCENTAGE_E2E1: ("Percentage", "Modifier"),
}


@dataclass
class RelationInstance:
    tokens: tuple[str, ...]
    type_tags: tuple[str, ...]
    e1: Entity
    e2: Entity
    label: RelationLabel | None = None
    source: str = ""  # document/sentence identity, e.g. "doc17:s2"

    def __post_init__(self):
        self.tokens = tuple(self.tokens)
        self.type_tags = tuple(self.type_tags)
        if len(self.type_tags) != len(self.tokens):
            raise ValueError(f"{len(self.type_tags)} type tags for {len(self.tokens)} tokens")
        if not self.e1.end < self.e2.start:
            raise ValueError(f"e1 {self.e1.span} must end before e2 {self.e2.span} starts")
        if self.e2.end >= len(self.tokens):
            raise ValueError(f"e2 span {self.e2.span} outside {len(self.tokens)} tokens")

    @property
    def key(self) -> tuple:
        return (self.source, self.tokens, self.e1.span, self.e2.span)

    def to_record(self) -> dict:
        rec = {
            "tokens": list(self.tokens),
            "type_tags": list(self.type_tags),
            "e1": {"span": list(self.e1.span), "type": self.e1.type},
            "e2": {"span": list(self.e2.span), "type": self.e2.type},
            "label": None if self.label is None else self.label.tag,
        }
        if self.source:
            rec["source"] = self.source
        return rec

    @classmethod
    def from_record(cls, rec: dict) -> "RelationInstance":
        tokens = rec["tokens"]

        def entity(d):
            s, e = d["span"]
            return Entity(s, e, d["type"], "".join(tokens[s : e + 1]))

        label = rec.get("label")
        return cls(
            tokens=tokens,
            type_tags=rec["type_tags"],
            e1=entity(rec["e1"]),
            e2=entity(rec["e2"]),
            label=None if label is None else RelationLabel.parse(label),
            source=rec.get("source", ""),
        )


@dataclass(frozen=True)
class SegmentSplit:
    """Five half-open token ranges: left context, e1, between, e2, right context."""

    ranges: tuple[tuple[int, int], ...] = field(default=())

    def segments(self, seq: Sequence) -> list:
        return [list(seq[a:b]) for a, b in self.ranges]

    @property
    def lengths(self) -> tuple[int, ...]:
        return tuple(b - a for a, b in self.ranges)


def generate_pairs(tokens: Sequence[str], entities: Iterable[Entity], source: str = "") -> list[RelationInstance]:
    """One unlabeled instance per unordered entity pair, earlier entity as e1."""
    ents = sorted(entities, key=lambda e: (e.start, e.end))
    for a, b in zip(ents, ents[1:]):
        if b.start <= a.end:
            raise ValueError(f"overlapping entities at token spans {a.span} and {b.span}")
    tags = _type_tags(len(tokens), ents)
    return [RelationInstance(tokens, tags, e1, e2, None, source) for e1, e2 in combinations(ents, 2)]


def split_segments(instance: RelationInstance) -> SegmentSplit:
    e1, e2 = instance.e1, instance.e2
    n = len(instance.tokens)
    return SegmentSplit(
        ((0, e1.start), (e1.start, e1.end + 1), (e1.end + 1, e2.start), (e2.start, e2.end + 1), (e2.end + 1, n))
    )


def balance_and_split(
    instances: Sequence[RelationInstance],
    discard_fraction: float = 0.85,
    train_fraction: float = 0.7,
    seed: int = 0,
) -> tuple[list[RelationInstance], list[RelationInstance]]:
    """Drop a random share of no_relation instances, then split per label.

    The kept no_relation count is ``floor(n * (1 - discard_fraction))``; each
    label contributes ``round(n_label * train_fraction)`` instances to train.
    """
    for name, frac in (("discard_fraction", discard_fraction), ("train_fraction", train_fraction)):
        if not 0.0 <= frac <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {frac}")
    if not instances:
        return [], []
    rng = np.random.default_rng(seed)
    by_label: dict[RelationLabel, list[int]] = {}
    for i, inst in enumerate(instances):
        if inst.label is None:
            raise ValueError(f"instance {i} has no label")
        by_label.setdefault(inst.label, []).append(i)

    train_idx: list[int] = []
    test_idx: list[int] = []
    for label in LABELS:
        idx = np.array(by_label.get(label, []), dtype=np.intp)
        if idx.size == 0:
            continue
        idx = idx[rng.permutation(idx.size)]
        if label is RelationLabel.NO_RELATION:
            keep = math.floor(idx.size * (1.0 - discard_fraction) + 1e-9)
            idx = idx[:keep]
        n_train = math.floor(idx.size * train_fraction + 0.5)
        train_idx.extend(idx[:n_train].tolist())
        test_idx.extend(idx[n_train:].tolist())

    train_idx = [train_idx[k] for k in rng.permutation(len(train_idx))]
    test_idx = [test_idx[k] for k in rng.permutation(len(test_idx))]
    return [instances[i] for i in train_idx], [instances[i] for i in test_idx]


def label_counts(instances: Iterable[RelationInstance]) -> dict[str, int]:
    counts = {label.tag: 0 for label in LABELS}
    for inst in instances:
        if inst.label is not None:
            counts[inst.label.tag] += 1
    return counts


def write_instances(path: str | Path, instances: Iterable[RelationInstance]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for inst in instances:
            fh.write(json.dumps(inst.to_record(), ensure_ascii=False) + "\n")


def read_instances(path: str | Path) -> list[RelationInstance]:
    with open(path, encoding="utf-8") as fh:
        return [RelationInstance.from_record(json.loads(line)) for line in fh if line.strip()]
