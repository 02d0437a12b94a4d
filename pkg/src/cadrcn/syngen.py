"""Template generator for gold-annotated angiography reports.

A document is built top-down: sample a severity level, a total lesion score
inside that level, a set of distinct lumina and a per-lumen score summing to
the total.  Each lumen finding is then verbalised by a clause template and
the templates fix the gold entities and relations exactly.  Covered shapes:

* ``L P 40% M`` and ``L P M 40%``: both percentage orderings
* ``L1、L2、L3 Neg 明显 M``: one negated modifier shared by conjoined lumina
* ``L1、L2 均 40% M``: a shared stenosis modifier
* ``L P1 30% M，P2 60% M``: a second lesion whose lumen is a clause away
* occlusions and normal findings

Sentence-length and clause-mix parameters are guesses; the real corpus
statistics are not public.  Everything is seeded per document, so any subset
of documents can be regenerated independently.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import LABELS, RelationInstance, RelationLabel, SIGNATURES, generate_pairs, label_counts
from .gensini import LEVELS, Triple, lesion_score, score_document
from .text import Entity, Lexicon, recognize_entities, tokenize

# relation totals of the hospital relation dataset, in label order
REFERENCE_COUNTS = {
    "modifier(e1,e2)": 1068,
    "negative(e2,e1)": 406,
    "position(e1,e2)": 389,
    "percentage(e1,e2)": 100,
    "percentage(e2,e1)": 256,
    "no_relation": 1977,
}
REFERENCE_MIX = {k: v / sum(REFERENCE_COUNTS.values()) for k, v in REFERENCE_COUNTS.items()}
SEVERITY_MIX = {"mild": 0.725, "moderate": 0.225, "severe": 0.05}

# total-score ranges sampled for each level (inclusive)
_LEVEL_TOTALS = {"mild": (0, 7), "moderate": (8, 14), "severe": (15, 20)}

_SURFACE = {
    "zh": {
        "join": "",
        "comma": "，",
        "conj": "、",
        "stop": "。",
        "obvious": "明显",
        "seen": "可见",
        "both": "均",
        "stenosis": ["狭窄", "狭窄", "狭窄", "局限性狭窄", "弥漫性狭窄"],
        "occlusion": ["闭塞", "完全闭塞"],
        "normal": ["正常", "通畅", "光滑"],
        "negated": ["狭窄"],
    },
    "ascii": {
        "join": " ",
        "comma": ",",
        "conj": "/",
        "stop": ".",
        "obvious": "obvious",
        "seen": "with",
        "both": "both",
        "stenosis": ["stenosis", "stenosis", "stenosis", "focal-stenosis", "diffuse-stenosis"],
        "occlusion": ["occlusion", "total-occlusion"],
        "normal": ["normal", "patent", "smooth"],
        "negated": ["stenosis"],
    },
}

DEFAULT_PERCENTS = {
    1: [10.0, 20.0, 30.0, 40.0, 45.0],
    2: [50.0, 60.0, 70.0],
    3: [75.0, 80.0, 85.0, 90.0, 95.0, 99.0],
    4: [100.0],
}


class GenerationError(RuntimeError):
    pass


@dataclass
class GenConfig:
    n_documents: int = 200
    n_instances: int | None = None
    class_mix: dict[str, float] = field(default_factory=lambda: dict(REFERENCE_MIX))
    severity_mix: dict[str, float] = field(default_factory=lambda: dict(SEVERITY_MIX))
    lumens_per_document: tuple[int, int] = (3, 7)
    clauses_per_sentence: tuple[int, int] = (1, 4)
    percent_choices: dict[int, list[float]] = field(default_factory=lambda: {k: list(v) for k, v in DEFAULT_PERCENTS.items()})
    p_negated: float = 0.8
    p_pct_after: float = 0.3
    p_position: float = 0.85
    p_second_lesion: float = 0.2
    p_shared: float = 0.3
    p_alias: float = 0.2
    p_filler: float = 0.5
    p_occlusion_word: float = 0.8
    max_conjunction: int = 5
    discard_fraction: float | None = None
    mode: str = "zh"
    seed: int = 0
    max_documents: int = 20000

    def __post_init__(self):
        self.lumens_per_document = tuple(self.lumens_per_document)
        self.clauses_per_sentence = tuple(self.clauses_per_sentence)
        self.percent_choices = {int(k): [float(x) for x in v] for k, v in self.percent_choices.items()}
        for name in ("p_negated", "p_pct_after", "p_position", "p_second_lesion", "p_shared", "p_alias",
                     "p_filler", "p_occlusion_word"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.discard_fraction is not None and not 0.0 <= self.discard_fraction <= 1.0:
            raise ValueError("discard_fraction must lie in [0, 1]")
        if self.mode not in _SURFACE:
            raise ValueError(f"mode must be one of {sorted(_SURFACE)}")
        for name, mix, keys in (("class_mix", self.class_mix, [lab.tag for lab in LABELS]),
                                ("severity_mix", self.severity_mix, list(LEVELS))):
            if set(mix) - set(keys):
                raise ValueError(f"{name} has unknown keys {sorted(set(mix) - set(keys))}")
            if any(v < 0 for v in mix.values()) or sum(mix.values()) <= 0:
                raise ValueError(f"{name} needs non-negative weights with a positive sum")
        lo, hi = self.lumens_per_document
        if not 1 <= lo <= hi:
            raise ValueError("lumens_per_document must be (lo, hi) with 1 <= lo <= hi")
        if self.max_conjunction < 1:
            raise ValueError("max_conjunction must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "GenConfig":
        return cls(**raw)


@dataclass
class GoldSentence:
    text: str
    tokens: list[str]
    entities: list[Entity]
    relations: list[tuple[int, RelationLabel, int]]  # indices into entities, e1 earlier

    def triples(self) -> list[Triple]:
        return [(self.entities[i], lab, self.entities[j]) for i, lab, j in self.relations]

    def instances(self, source: str) -> list[RelationInstance]:
        gold = {(self.entities[i].span, self.entities[j].span): lab for i, lab, j in self.relations}
        pairs = generate_pairs(self.tokens, self.entities, source)
        for inst in pairs:
            inst.label = gold.get((inst.e1.span, inst.e2.span), RelationLabel.NO_RELATION)
        return pairs


@dataclass
class GoldDocument:
    doc_id: str
    sentences: list[GoldSentence]
    diameters: dict[str, float]
    total: int
    level: str
    mode: str = "zh"

    @property
    def text(self) -> str:
        return _SURFACE[self.mode]["join"].join(s.text for s in self.sentences)

    def triples(self) -> list[Triple]:
        return [t for s in self.sentences for t in s.triples()]

    def entities(self) -> list[Entity]:
        return [e for s in self.sentences for e in s.entities]

    def instances(self) -> list[RelationInstance]:
        return [inst for k, s in enumerate(self.sentences) for inst in s.instances(f"{self.doc_id}:s{k}")]

    def to_record(self) -> dict:
        return {
            "id": self.doc_id,
            "text": self.text,
            "mode": self.mode,
            "sentences": [
                {
                    "text": s.text,
                    "tokens": s.tokens,
                    "entities": [{"span": list(e.span), "type": e.type, "surface": e.surface} for e in s.entities],
                    "relations": [[i, lab.tag, j] for i, lab, j in s.relations],
                }
                for s in self.sentences
            ],
            "diameters": self.diameters,
            "total": self.total,
            "level": self.level,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "GoldDocument":
        sentences = []
        for k, s in enumerate(rec["sentences"]):
            ents = [Entity(e["span"][0], e["span"][1], e["type"], e["surface"], k) for e in s["entities"]]
            rels = [(i, RelationLabel.parse(tag), j) for i, tag, j in s["relations"]]
            sentences.append(GoldSentence(s["text"], s["tokens"], ents, rels))
        return cls(rec["id"], sentences, rec["diameters"], rec["total"], rec["level"], rec.get("mode", "zh"))


@dataclass
class Corpus:
    documents: list[GoldDocument]
    instances: list[RelationInstance]
    summary: dict


# ---------------------------------------------------------------------------
# document construction


@dataclass
class _Finding:
    surface: str  # lumen surface form
    canonical: str
    kind: str  # negated | normal | stenosis | occlusion
    percent: float = 0.0
    second: float | None = None  # percent of a lesser second lesion


class _Clause:
    """Token pieces with entity types and within-clause relations."""

    def __init__(self):
        self.pieces: list[tuple[str, str | None]] = []
        self.relations: list[tuple[int, RelationLabel, int]] = []

    def add(self, surface: str, type_: str | None = None) -> int:
        self.pieces.append((surface, type_))
        return len(self.pieces) - 1

    def rel(self, a: int, label: RelationLabel, b: int) -> None:
        self.relations.append((a, label, b))


def _pct_text(value: float) -> str:
    return f"{value:g}%"


class _DocumentBuilder:
    def __init__(self, cfg: GenConfig, lexicon: Lexicon, rng: np.random.Generator):
        self.cfg = cfg
        self.lex = lexicon
        self.rng = rng
        self.words = _SURFACE[cfg.mode]
        self.aliases: dict[str, list[str]] = {}
        for term, (_, canon) in lexicon.lumen.items():
            self.aliases.setdefault(canon, []).append(term)
        self.canonicals = sorted(self.aliases)

    def pick(self, seq):
        return seq[int(self.rng.integers(len(seq)))]

    def chance(self, p: float) -> bool:
        return bool(self.rng.random() < p)

    # -- findings -------------------------------------------------------

    def findings(self) -> tuple[str, list[_Finding]]:
        cfg, rng = self.cfg, self.rng
        levels = [lvl for lvl in LEVELS if cfg.severity_mix.get(lvl, 0) > 0]
        weights = np.array([cfg.severity_mix[lvl] for lvl in levels], dtype=float)
        level = levels[int(rng.choice(len(levels), p=weights / weights.sum()))]
        lo_t, hi_t = _LEVEL_TOTALS[level]
        total = int(rng.integers(lo_t, hi_t + 1))
        lo, hi = cfg.lumens_per_document
        hi = min(hi, len(self.canonicals))
        lo = min(max(lo, math.ceil(total / 4)), len(self.canonicals))
        n = int(rng.integers(lo, max(lo, hi) + 1))
        if 4 * n < total:
            raise GenerationError(f"cannot reach total score {total} with {n} lumina")
        scores = [0] * n
        for _ in range(total):
            open_slots = [k for k in range(n) if scores[k] < 4]
            scores[self.pick(open_slots)] += 1
        chosen = rng.choice(len(self.canonicals), size=n, replace=False)
        out = []
        for score, ci in zip(scores, chosen):
            canon = self.canonicals[int(ci)]
            forms = self.aliases[canon]
            surface = canon
            if len(forms) > 1 and self.chance(cfg.p_alias):
                surface = self.pick([f for f in forms if f != canon])
            if score == 0:
                kind = "negated" if self.chance(cfg.p_negated) else "normal"
                out.append(_Finding(surface, canon, kind))
                continue
            if score == 4 and self.chance(cfg.p_occlusion_word):
                out.append(_Finding(surface, canon, "occlusion", 100.0))
                continue
            pct = self.pick(cfg.percent_choices[score])
            second = None
            if self.chance(cfg.p_second_lesion):
                lesser = [p for s in range(1, score + 1) for p in cfg.percent_choices[s] if p <= pct]
                second = self.pick(lesser)
            out.append(_Finding(surface, canon, "stenosis", pct, second))
        return level, out

    # -- clauses --------------------------------------------------------

    def _position(self, c: _Clause, lumen: int) -> None:
        if self.chance(self.cfg.p_position):
            p = c.add(self.pick(self.lex.position), "Position")
            c.rel(lumen, RelationLabel.POSITION, p)

    def _stenosis_tail(self, c: _Clause, lumens: list[int], pct: float, after: bool, filler: bool = True) -> None:
        if after:
            m = c.add(self.pick(self.words["stenosis"]), "Modifier")
            p = c.add(_pct_text(pct), "Percentage")
            c.rel(m, RelationLabel.PERCENTAGE_E1E2, p)
        else:
            if filler and self.chance(self.cfg.p_filler / 2):
                c.add(self.words["seen"])
            p = c.add(_pct_text(pct), "Percentage")
            m = c.add(self.pick(self.words["stenosis"]), "Modifier")
            c.rel(p, RelationLabel.PERCENTAGE_E2E1, m)
        for lum in lumens:
            c.rel(lum, RelationLabel.MODIFIER, m)

    def _conjoin(self, c: _Clause, findings: Sequence[_Finding]) -> list[int]:
        idx = []
        for k, f in enumerate(findings):
            if k:
                c.add(self.words["conj"])
            idx.append(c.add(f.surface, "Lumen"))
        return idx

    def negated_clause(self, group: Sequence[_Finding]) -> _Clause:
        c = _Clause()
        lumens = self._conjoin(c, group)
        neg = c.add(self.pick(self.lex.negative), "Negative")
        if self.chance(self.cfg.p_filler):
            c.add(self.words["obvious"])
        m = c.add(self.pick(self.words["negated"]), "Modifier")
        c.rel(neg, RelationLabel.NEGATIVE, m)
        for lum in lumens:
            c.rel(lum, RelationLabel.MODIFIER, m)
        return c

    def single_clause(self, f: _Finding) -> list[_Clause]:
        c = _Clause()
        lum = c.add(f.surface, "Lumen")
        if f.kind == "normal":
            m = c.add(self.pick(self.words["normal"]), "Modifier")
            c.rel(lum, RelationLabel.MODIFIER, m)
            return [c]
        self._position(c, lum)
        if f.kind == "occlusion":
            m = c.add(self.pick(self.words["occlusion"]), "Modifier")
            c.rel(lum, RelationLabel.MODIFIER, m)
            return [c]
        self._stenosis_tail(c, [lum], f.percent, self.chance(self.cfg.p_pct_after))
        if f.second is None:
            return [c]
        # second lesion: its lumen sits in the previous clause
        tail = _Clause()
        offset = len(c.pieces) + 1
        p = tail.add(self.pick(self.lex.position), "Position")
        self._stenosis_tail(tail, [], f.second, self.chance(self.cfg.p_pct_after))
        m = next(i for i, (_, t) in enumerate(tail.pieces) if t == "Modifier")
        c.relations.append((lum, RelationLabel.POSITION, offset + p))
        c.relations.append((lum, RelationLabel.MODIFIER, offset + m))
        return [c, tail]

    def shared_clause(self, pair: Sequence[_Finding]) -> _Clause:
        c = _Clause()
        lumens = self._conjoin(c, pair)
        both = self.chance(self.cfg.p_filler)
        if both:
            c.add(self.words["both"])
        self._stenosis_tail(c, lumens, pair[0].percent, self.chance(self.cfg.p_pct_after), filler=not both)
        return c

    def units(self, findings: list[_Finding]) -> list[list[_Clause]]:
        cfg = self.cfg
        negated = [f for f in findings if f.kind == "negated"]
        simple = [f for f in findings if f.kind != "negated"]
        units: list[list[_Clause]] = []
        while negated:
            size = int(self.rng.integers(1, min(cfg.max_conjunction, len(negated)) + 1))
            units.append([self.negated_clause(negated[:size])])
            negated = negated[size:]
        # pair up same-score stenoses into shared-modifier clauses
        pending = [f for f in simple if f.kind == "stenosis" and f.second is None]
        used: set[int] = set()
        for a in range(len(pending)):
            if id(pending[a]) in used:
                continue
            for b in range(a + 1, len(pending)):
                fa, fb = pending[a], pending[b]
                if id(fb) in used or lesion_score(fa.percent) != lesion_score(fb.percent):
                    continue
                if self.chance(cfg.p_shared):
                    fb.percent = fa.percent
                    used.update((id(fa), id(fb)))
                    units.append([self.shared_clause([fa, fb])])
                break
        for f in simple:
            if id(f) not in used:
                units.append(self.single_clause(f))
        order = self.rng.permutation(len(units))
        return [units[k] for k in order]

    def sentences(self, units: list[list[_Clause]]) -> list[list[_Clause]]:
        lo, hi = self.cfg.clauses_per_sentence
        out = []
        while units:
            size = int(self.rng.integers(lo, hi + 1))
            chunk, units = units[:size], units[size:]
            out.append([c for unit in chunk for c in unit])
        return out

    def realise(self, clauses: list[_Clause], k: int) -> GoldSentence:
        pieces: list[tuple[str, str | None]] = []
        relations = []
        for n, c in enumerate(clauses):
            if n:
                pieces.append((self.words["comma"], None))
            base = len(pieces)
            pieces.extend(c.pieces)
            relations.extend((base + a, lab, base + b) for a, lab, b in c.relations)
        pieces.append((self.words["stop"], None))
        text = self.words["join"].join(s for s, _ in pieces)
        tokens = [t.surface for t in tokenize(text, self.lex)]
        surfaces = [s for s, _ in pieces]
        if tokens != surfaces:
            raise GenerationError(f"template pieces {surfaces} re-tokenise as {tokens}")
        ent_index = {}
        entities = []
        for pos, (s, t) in enumerate(pieces):
            if t is not None:
                ent_index[pos] = len(entities)
                entities.append(Entity(pos, pos, t, s, k))
        if recognize_entities(tokens, self.lex, k) != entities:
            raise GenerationError(f"NER disagrees with template entities in {text!r}")
        rels = []
        for a, lab, b in relations:
            i, j = ent_index[a], ent_index[b]
            if (entities[i].type, entities[j].type) != SIGNATURES[lab] or not a < b:
                raise GenerationError(f"relation {lab.tag} does not fit {entities[i]} / {entities[j]}")
            rels.append((i, lab, j))
        return GoldSentence(text, tokens, entities, sorted(rels, key=lambda r: (r[0], r[2])))


def generate_document(cfg: GenConfig, lexicon: Lexicon, index: int) -> GoldDocument:
    rng = np.random.default_rng([cfg.seed, index])
    builder = _DocumentBuilder(cfg, lexicon, rng)
    level, findings = builder.findings()
    groups = builder.sentences(builder.units(findings))
    sentences = [builder.realise(g, k) for k, g in enumerate(groups)]
    doc_id = f"doc{index:05d}"
    entities = [e for s in sentences for e in s.entities]
    report = score_document([t for s in sentences for t in s.triples()], lexicon, entities)
    intended = {}
    for f in findings:
        intended[f.canonical] = f.percent if f.kind in ("stenosis", "occlusion") else 0.0
    got = {r.lumen: r.diameter for r in report.lesions}
    if got != intended or report.level != level:
        raise GenerationError(f"{doc_id}: gold relations score {got}/{report.level}, intended {intended}/{level}")
    return GoldDocument(doc_id, sentences, got, report.total, report.level, cfg.mode)


def generate_documents(cfg: GenConfig, lexicon: Lexicon | None = None, start: int = 0) -> list[GoldDocument]:
    lexicon = lexicon or Lexicon.default(cfg.mode)
    return [generate_document(cfg, lexicon, start + i) for i in range(cfg.n_documents)]


def _targets(cfg: GenConfig) -> dict[str, int]:
    weight = sum(cfg.class_mix.values())
    return {lab.tag: int(round(cfg.n_instances * cfg.class_mix.get(lab.tag, 0.0) / weight)) for lab in LABELS}


def generate_corpus(cfg: GenConfig, lexicon: Lexicon | None = None) -> Corpus:
    """Documents plus a labelled instance file.

    Without ``n_instances`` every candidate pair of ``n_documents`` documents
    is emitted (no_relation thinned by ``discard_fraction`` if set).  With
    ``n_instances``, documents are generated until every class can meet its
    share of the class mix, then each class is sampled down to that share;
    an explicit ``discard_fraction`` overrides the no_relation share.
    """
    lexicon = lexicon or Lexicon.default(cfg.mode)
    no_rel = RelationLabel.NO_RELATION.tag
    if cfg.n_instances is None:
        docs = generate_documents(cfg, lexicon)
        pools: dict[str, list[RelationInstance]] = {lab.tag: [] for lab in LABELS}
        for doc in docs:
            for inst in doc.instances():
                pools[inst.label.tag].append(inst)
        targets = {k: len(v) for k, v in pools.items()}
        if cfg.discard_fraction is not None:
            targets[no_rel] = math.floor(len(pools[no_rel]) * (1 - cfg.discard_fraction) + 1e-9)
    else:
        targets = _targets(cfg)
        pools = {lab.tag: [] for lab in LABELS}
        docs = []
        while len(docs) < cfg.max_documents:
            need = [k for k, t in targets.items() if len(pools[k]) < t and k != no_rel]
            if not need and (cfg.discard_fraction is not None or len(pools[no_rel]) >= targets[no_rel]):
                break
            if len(docs) >= 500 and any(len(pools[k]) == 0 for k in need):
                break  # a requested class never occurs under these template settings
            doc = generate_document(cfg, lexicon, len(docs))
            docs.append(doc)
            for inst in doc.instances():
                pools[inst.label.tag].append(inst)
        if cfg.discard_fraction is not None:
            targets[no_rel] = math.floor(len(pools[no_rel]) * (1 - cfg.discard_fraction) + 1e-9)

    rng = np.random.default_rng([cfg.seed, 1_000_003])
    instances: list[RelationInstance] = []
    shortfall = {}
    for lab in LABELS:
        pool = pools[lab.tag]
        want = targets[lab.tag]
        if want >= len(pool):
            if want > len(pool):
                shortfall[lab.tag] = want - len(pool)
            instances.extend(pool)
        else:
            keep = np.sort(rng.choice(len(pool), size=want, replace=False))
            instances.extend(pool[int(k)] for k in keep)
    instances.sort(key=lambda i: (i.source, i.e1.start, i.e2.start))

    achieved = label_counts(instances)
    total = sum(achieved.values())
    summary = {
        "documents": len(docs),
        "instances": total,
        "targets": targets,
        "achieved": achieved,
        "achieved_mix": {k: (v / total if total else 0.0) for k, v in achieved.items()},
        "candidate_pool": {k: len(v) for k, v in pools.items()},
        "no_relation_discarded": 1.0 - achieved[no_rel] / len(pools[no_rel]) if pools[no_rel] else 0.0,
        "severity": {lvl: sum(d.level == lvl for d in docs) for lvl in LEVELS},
    }
    if shortfall:
        summary["unsatisfied"] = shortfall
    return Corpus(docs, instances, summary)


def write_documents(path: str | Path, docs: Sequence[GoldDocument]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            fh.write(json.dumps(doc.to_record(), ensure_ascii=False) + "\n")


def read_documents(path: str | Path) -> list[GoldDocument]:
    with open(path, encoding="utf-8") as fh:
        return [GoldDocument.from_record(json.loads(line)) for line in fh if line.strip()]
