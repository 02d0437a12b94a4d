"""Text -> entities -> relations -> severity, per document."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .dataset import RelationLabel, generate_pairs
from .gensini import SeverityReport, Triple, score_document
from .model import RCN
from .syngen import GoldDocument
from .text import Entity, Lexicon, recognize_entities, split_sentences, tokenize


@dataclass
class DocumentResult:
    doc_id: str
    entities: list[Entity]
    relations: list[Triple]
    report: SeverityReport

    def to_record(self) -> dict:
        return {
            "id": self.doc_id,
            "relations": [
                {"sentence": a.sentence, "e1": a.surface, "e1_span": list(a.span), "label": lab.tag,
                 "e2": b.surface, "e2_span": list(b.span)}
                for a, lab, b in self.relations
            ],
            **self.report.to_record(),
        }


def extract_entities(text: str, lexicon: Lexicon) -> list[tuple[list[str], list[Entity]]]:
    out = []
    for k, sentence in enumerate(split_sentences(text)):
        tokens = [t.surface for t in tokenize(sentence, lexicon)]
        out.append((tokens, recognize_entities(tokens, lexicon, sentence=k)))
    return out


def classify_document(doc_id: str, text: str, model: RCN, lexicon: Lexicon) -> DocumentResult:
    return run_pipeline([(doc_id, text)], model, lexicon)[0]


def run_pipeline(
    documents: Sequence[tuple[str, str]],
    model: RCN | None,
    lexicon: Lexicon,
) -> list[DocumentResult]:
    """NER, pair generation, relation prediction and scoring for (id, text) documents.

    All candidate pairs of all documents are predicted in shared batches.
    """
    parsed = []
    pending = []
    for doc_id, text in documents:
        sentences = extract_entities(text, lexicon)
        parsed.append((doc_id, sentences))
        for k, (tokens, ents) in enumerate(sentences):
            for inst in generate_pairs(tokens, ents, f"{doc_id}:s{k}"):
                pending.append((len(parsed) - 1, k, inst))
    if pending and model is None:
        raise ValueError("a model is required to classify relations")
    preds = model.predict([p[2] for p in pending]) if pending else []
    found: list[list[Triple]] = [[] for _ in parsed]
    for (d, k, inst), pred in zip(pending, preds):
        if pred.label is not RelationLabel.NO_RELATION:
            e1 = Entity(inst.e1.start, inst.e1.end, inst.e1.type, inst.e1.surface, k)
            e2 = Entity(inst.e2.start, inst.e2.end, inst.e2.type, inst.e2.surface, k)
            found[d].append((e1, pred.label, e2))
    results = []
    for (doc_id, sentences), triples in zip(parsed, found):
        entities = [e for _, ents in sentences for e in ents]
        results.append(DocumentResult(doc_id, entities, triples, score_document(triples, lexicon, entities)))
    return results


def run_oracle(documents: Sequence[GoldDocument], lexicon: Lexicon) -> list[DocumentResult]:
    """Score gold relations directly, bypassing the relation model."""
    results = []
    for doc in documents:
        entities = doc.entities()
        triples = doc.triples()
        results.append(DocumentResult(doc.doc_id, entities, triples, score_document(triples, lexicon, entities)))
    return results
