"""Tokenization and rule-based recognition of the five clinical entity types."""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable

ENTITY_TYPES = ("Lumen", "Modifier", "Negative", "Position", "Percentage")
MODIFIER_KINDS = ("normal", "stenosis", "occlusion")
SIDES = ("left", "right")

# 1-3 digits, optional fraction, percent sign; never starts inside a longer number
PERCENT_RE = re.compile(r"(?<![\d.])\d{1,3}(?:\.\d+)?%")


@dataclass(frozen=True)
class Token:
    surface: str
    start: int
    end: int  # exclusive character offset


@dataclass(frozen=True)
class Entity:
    """A typed span of tokens; ``start``/``end`` are inclusive token indices."""

    start: int
    end: int
    type: str
    surface: str
    sentence: int = 0

    def __post_init__(self):
        if self.type not in ENTITY_TYPES:
            raise ValueError(f"unknown entity type {self.type!r}")
        if not 0 <= self.start <= self.end:
            raise ValueError(f"invalid token span ({self.start}, {self.end})")

    @property
    def span(self) -> tuple[int, int]:
        return (self.start, self.end)


@dataclass
class Lexicon:
    lumen: dict[str, tuple[str, str]] = field(default_factory=dict)  # term -> (side, canonical)
    modifier: dict[str, str] = field(default_factory=dict)  # term -> kind
    negative: tuple[str, ...] = ()
    position: tuple[str, ...] = ()

    def __post_init__(self):
        self._types: dict[str, str] = {}
        for type_, terms in (
            ("Lumen", self.lumen),
            ("Modifier", self.modifier),
            ("Negative", self.negative),
            ("Position", self.position),
        ):
            for term in terms:
                if term in self._types:
                    raise ValueError(f"term {term!r} listed as both {self._types[term]} and {type_}")
                self._types[term] = type_
        for term, (side, _) in self.lumen.items():
            if side not in SIDES:
                raise ValueError(f"lumen {term!r} has side {side!r}; expected left or right")
        for term, kind in self.modifier.items():
            if kind not in MODIFIER_KINDS:
                raise ValueError(f"modifier {term!r} has kind {kind!r}")
        self._by_first: dict[str, list[str]] = {}
        for term in sorted(self._types, key=len, reverse=True):
            self._by_first.setdefault(term[0], []).append(term)

    @classmethod
    def from_dict(cls, raw: dict) -> "Lexicon":
        lumen = {}
        for item in raw.get("lumen", []):
            if "side" not in item:
                raise ValueError(f"lumen term {item.get('term')!r} lacks a side tag")
            if item["term"] in lumen:
                raise ValueError(f"duplicate lumen term {item['term']!r}")
            lumen[item["term"]] = (item["side"], item.get("canonical", item["term"]))
        modifier = {}
        for item in raw.get("modifier", []):
            if item["term"] in modifier:
                raise ValueError(f"duplicate modifier term {item['term']!r}")
            modifier[item["term"]] = item["kind"]
        negative = tuple(raw.get("negative", []))
        position = tuple(raw.get("position", []))
        for name, terms in (("negative", negative), ("position", position)):
            if len(set(terms)) != len(terms):
                raise ValueError(f"duplicate {name} term")
        return cls(lumen=lumen, modifier=modifier, negative=negative, position=position)

    def to_dict(self) -> dict:
        return {
            "lumen": [
                {"term": t, "side": s, **({"canonical": c} if c != t else {})}
                for t, (s, c) in self.lumen.items()
            ],
            "modifier": [{"term": t, "kind": k} for t, k in self.modifier.items()],
            "negative": list(self.negative),
            "position": list(self.position),
        }

    @classmethod
    def load(cls, path: str | Path) -> "Lexicon":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls, mode: str = "zh") -> "Lexicon":
        name = {"zh": "lexicon_zh.json", "ascii": "lexicon_ascii.json"}[mode]
        text = resources.files("cadrcn.data").joinpath(name).read_text(encoding="utf-8")
        return cls.from_dict(json.loads(text))

    def type_of(self, term: str) -> str | None:
        return self._types.get(term)

    def canonical(self, term: str) -> str:
        return self.lumen[term][1]

    def side(self, term: str) -> str:
        return self.lumen[term][0]

    def kind(self, term: str) -> str:
        return self.modifier[term]

    def match_at(self, text: str, i: int) -> int:
        """Length of the longest lexicon term or percentage starting at ``i`` (0 if none)."""
        best = 0
        m = PERCENT_RE.match(text, i)
        if m:
            best = m.end() - i
        for term in self._by_first.get(text[i], ()):
            if len(term) <= best:
                break
            if text.startswith(term, i) and _word_bounded(text, i, i + len(term)):
                best = len(term)
                break
        return best


def _is_ascii_alnum(ch: str) -> bool:
    return ch.isascii() and ch.isalnum()


def _word_bounded(text: str, start: int, end: int) -> bool:
    # ASCII terms must not be glued to further ASCII letters/digits
    if _is_ascii_alnum(text[start]) and start > 0 and _is_ascii_alnum(text[start - 1]):
        return False
    if _is_ascii_alnum(text[end - 1]) and end < len(text) and _is_ascii_alnum(text[end]):
        return False
    return True


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P") and ch not in "-%."


def tokenize(sentence: str, lexicon: Lexicon) -> list[Token]:
    """Greedy longest-match segmentation.

    Lexicon terms and percentages become single tokens; every punctuation mark
    is its own token; any other maximal run of non-space characters is one
    token.
    """
    tokens: list[Token] = []
    n = len(sentence)
    i = 0
    while i < n:
        ch = sentence[i]
        if ch.isspace():
            i += 1
            continue
        length = lexicon.match_at(sentence, i)
        if length:
            tokens.append(Token(sentence[i : i + length], i, i + length))
            i += length
            continue
        if _is_punct(ch):
            tokens.append(Token(ch, i, i + 1))
            i += 1
            continue
        j = i + 1
        while j < n:
            c = sentence[j]
            if c.isspace() or _is_punct(c) or lexicon.match_at(sentence, j):
                break
            j += 1
        tokens.append(Token(sentence[i:j], i, j))
        i = j
    return tokens


def recognize_entities(tokens: Iterable[Token | str], lexicon: Lexicon, sentence: int = 0) -> list[Entity]:
    entities = []
    for idx, tok in enumerate(tokens):
        surface = tok.surface if isinstance(tok, Token) else tok
        type_ = lexicon.type_of(surface)
        if type_ is None and PERCENT_RE.fullmatch(surface):
            type_ = "Percentage"
        if type_ is not None:
            entities.append(Entity(idx, idx, type_, surface, sentence))
    return entities


def parse_percentage(surface: str) -> float:
    if not PERCENT_RE.fullmatch(surface):
        raise ValueError(f"{surface!r} is not a percentage")
    return float(surface[:-1])


def split_sentences(text: str) -> list[str]:
    """Split on sentence-final marks, keeping the mark with its sentence."""
    parts = re.split(r"(?<=[。！？!?\n])|(?<=\.)(?!\d)", text)
    return [p for p in (s.strip() for s in parts) if p]


def type_tags(n_tokens: int, entities: Iterable[Entity]) -> list[str]:
    tags = ["none"] * n_tokens
    for ent in entities:
        for k in range(ent.start, ent.end + 1):
            tags[k] = ent.type
    return tags
