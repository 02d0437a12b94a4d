"""Simplified Gensini grading: per-lumen maximum stenosis to a severity level."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

from .dataset import RelationLabel, SIGNATURES
from .text import Entity, Lexicon, parse_percentage

log = logging.getLogger(__name__)

LEVELS = ("mild", "moderate", "severe")

Triple = tuple[Entity, RelationLabel, Entity]


class LesionError(ValueError):
    """A percentage entity that cannot be a stenosis diameter."""


@dataclass
class LesionRecord:
    lumen: str
    side: str
    diameter: float
    evidence: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def score(self) -> int:
        return lesion_score(self.diameter)


@dataclass
class SeverityReport:
    lesions: list[LesionRecord]
    left_total: int
    right_total: int
    total: int
    level: str

    def to_record(self) -> dict:
        return {
            "lesions": [
                {"lumen": r.lumen, "side": r.side, "diameter": r.diameter, "score": r.score} for r in self.lesions
            ],
            "left_total": self.left_total,
            "right_total": self.right_total,
            "total": self.total,
            "level": self.level,
        }


def lesion_score(diameter: float) -> int:
    """Score a maximum stenosis diameter (percent) on the 0-4 scale.

    Bands are half-open, [1, 50) -> 1, [50, 75) -> 2, [75, 100) -> 3, so
    integer inputs reproduce the 1-49 / 50-74 / 75-99 / 100 table exactly.
    """
    if not 0.0 <= diameter <= 100.0:
        raise ValueError(f"diameter {diameter} outside [0, 100]")
    if diameter == 100.0:
        return 4
    if diameter >= 75.0:
        return 3
    if diameter >= 50.0:
        return 2
    if diameter >= 1.0:
        return 1
    return 0


def severity_level(total: int) -> str:
    if total <= 7:
        return "mild"
    if total <= 14:
        return "moderate"
    return "severe"


def _percent_value(ent: Entity) -> float:
    try:
        value = parse_percentage(ent.surface)
    except ValueError:
        raise LesionError(f"percentage entity {ent.surface!r} at {ent.span} is not a percentage") from None
    if not 0.0 < value <= 100.0:
        raise LesionError(f"percentage entity {ent.surface!r} at {ent.span} is outside (0, 100]")
    return value


def _typed(triple: Triple) -> bool:
    e1, label, e2 = triple
    sig = SIGNATURES.get(label)
    return sig is not None and (e1.type, e2.type) == sig


def aggregate_lesions(
    relations: Iterable[Triple],
    lexicon: Lexicon,
    entities: Iterable[Entity] = (),
) -> list[LesionRecord]:
    """Maximum stenosis per canonical lumen.

    ``relations`` are (e1, label, e2) triples with e1 the earlier entity.
    Triples whose argument types do not fit their label are ignored.  Lumen
    entities listed in ``entities`` but never linked still get a zero record.
    """
    relations = [t for t in relations if _typed(t)]
    lumen_mods: dict[Entity, list[Entity]] = {}
    negated: set[Entity] = set()
    mod_pcts: dict[Entity, list[Entity]] = {}
    positions: dict[Entity, list[Entity]] = {}
    lumens: list[Entity] = [e for e in entities if e.type == "Lumen"]

    for e1, label, e2 in relations:
        if label is RelationLabel.MODIFIER:
            lumen_mods.setdefault(e1, []).append(e2)
            lumens.append(e1)
        elif label is RelationLabel.NEGATIVE:
            negated.add(e2)
        elif label is RelationLabel.POSITION:
            positions.setdefault(e1, []).append(e2)
            lumens.append(e1)
        elif label is RelationLabel.PERCENTAGE_E1E2:
            mod_pcts.setdefault(e1, []).append(e2)
        elif label is RelationLabel.PERCENTAGE_E2E1:
            mod_pcts.setdefault(e2, []).append(e1)

    records: dict[str, LesionRecord] = {}
    for lumen in sorted(set(lumens), key=lambda e: (e.sentence, e.start)):
        name = lexicon.canonical(lumen.surface)
        rec = records.get(name)
        if rec is None:
            rec = records[name] = LesionRecord(name, lexicon.side(lumen.surface), 0.0)
        for pos in positions.get(lumen, ()):
            rec.evidence.append((lumen.surface, RelationLabel.POSITION.tag, pos.surface))
        for mod in lumen_mods.get(lumen, ()):
            rec.evidence.append((lumen.surface, RelationLabel.MODIFIER.tag, mod.surface))
            if mod in negated:
                continue
            kind = lexicon.kind(mod.surface)
            if kind == "occlusion":
                value = 100.0
            elif kind == "normal":
                value = 0.0
            else:
                pcts = mod_pcts.get(mod, [])
                if not pcts:
                    log.warning("stenosis %r on %s has no linked percentage; scored as 0", mod.surface, name)
                    value = 0.0
                else:
                    value = max(_percent_value(p) for p in pcts)
            rec.diameter = max(rec.diameter, value)
    return list(records.values())


def total_and_classify(lesions: Iterable[LesionRecord]) -> SeverityReport:
    lesions = list(lesions)
    left = sum(r.score for r in lesions if r.side == "left")
    right = sum(r.score for r in lesions if r.side == "right")
    total = left + right
    return SeverityReport(lesions, left, right, total, severity_level(total))


def score_document(relations: Iterable[Triple], lexicon: Lexicon, entities: Iterable[Entity] = ()) -> SeverityReport:
    return total_and_classify(aggregate_lesions(relations, lexicon, entities))
