import numpy as np
import pytest

from cadrcn.dataset import SIGNATURES, RelationLabel, label_counts
from cadrcn.gensini import score_document
from cadrcn.pipeline import extract_entities, run_oracle
from cadrcn.syngen import (
    REFERENCE_COUNTS, GenConfig, GoldDocument, GoldSentence, generate_corpus, generate_documents, read_documents,
    write_documents,
)
from cadrcn.text import Lexicon, parse_percentage


@pytest.fixture(scope="module")
def docs():
    return generate_documents(GenConfig(n_documents=150, seed=11))


@pytest.fixture(scope="module")
def table_i_corpus():
    return generate_corpus(GenConfig(n_instances=sum(REFERENCE_COUNTS.values()), seed=0))


def test_deterministic():
    cfg = GenConfig(n_documents=20, seed=3)
    a = [d.to_record() for d in generate_documents(cfg)]
    b = [d.to_record() for d in generate_documents(cfg)]
    assert a == b
    assert a != [d.to_record() for d in generate_documents(GenConfig(n_documents=20, seed=4))]


def test_table_i_counts(table_i_corpus):
    counts = label_counts(table_i_corpus.instances)
    for tag, target in REFERENCE_COUNTS.items():
        assert abs(counts[tag] - target) <= 0.1 * target, (tag, counts[tag], target)
    assert "unsatisfied" not in table_i_corpus.summary


def test_ner_recovers_gold_entities(docs, zh):
    for doc in docs:
        found = extract_entities(doc.text, zh)
        assert len(found) == len(doc.sentences)
        for (tokens, ents), s in zip(found, doc.sentences):
            assert tokens == s.tokens
            assert ents == s.entities


def test_gold_severity_self_consistent(docs, zh):
    for doc in docs:
        report = score_document(doc.triples(), zh, doc.entities())
        assert (report.total, report.level) == (doc.total, doc.level)
        assert {r.lumen: r.diameter for r in report.lesions} == doc.diameters


def test_signatures_and_percentages(docs):
    for doc in docs:
        for e1, label, e2 in doc.triples():
            assert e1.end < e2.start
            assert (e1.type, e2.type) == SIGNATURES[label]
        for e in doc.entities():
            if e.type == "Percentage":
                assert 0 < parse_percentage(e.surface) <= 100


def test_long_distance_instances(docs):
    far = [
        inst for doc in docs for inst in doc.instances()
        if inst.label is not RelationLabel.NO_RELATION and inst.e2.start - inst.e1.end > 10
    ]
    assert far


def test_template_variety(docs):
    labels = {lab for doc in docs for _, lab, _ in doc.triples()}
    assert labels == set(SIGNATURES)
    levels = {doc.level for doc in docs}
    assert levels == {"mild", "moderate", "severe"}


def test_single_40_percent_is_mild(example, zh):
    tokens, ents, _ = example
    first = [e for e in ents if e.start <= 3]
    rels = [(0, RelationLabel.MODIFIER, 3), (0, RelationLabel.POSITION, 1), (2, RelationLabel.PERCENTAGE_E2E1, 3)]
    doc = GoldDocument("d", [GoldSentence("左前降支中段40%狭窄", tokens[:4], first, rels)], {"左前降支": 40.0}, 1, "mild")
    (result,) = run_oracle([doc], zh)
    assert result.report.level == "mild" and result.report.total == 1


def test_document_round_trip(docs, tmp_path):
    path = tmp_path / "docs.jsonl"
    write_documents(path, docs[:10])
    back = read_documents(path)
    assert [d.to_record() for d in back] == [d.to_record() for d in docs[:10]]
    assert [i.to_record() for i in back[3].instances()] == [i.to_record() for i in docs[3].instances()]


def test_ascii_mode():
    cfg = GenConfig(n_documents=30, mode="ascii", seed=2)
    lex = Lexicon.default("ascii")
    for doc in generate_documents(cfg):
        assert doc.text.isascii()
        for (tokens, ents), s in zip(extract_entities(doc.text, lex), doc.sentences):
            assert tokens == s.tokens and ents == s.entities


def test_discard_fraction_without_target():
    full = generate_corpus(GenConfig(n_documents=40, seed=1))
    thin = generate_corpus(GenConfig(n_documents=40, seed=1, discard_fraction=0.85))
    a, b = label_counts(full.instances), label_counts(thin.instances)
    assert b["no_relation"] == int(np.floor(a["no_relation"] * 0.15 + 1e-9))
    assert {k: v for k, v in a.items() if k != "no_relation"} == {k: v for k, v in b.items() if k != "no_relation"}


def test_unsatisfiable_mix_reported():
    cfg = GenConfig(n_instances=200, p_negated=0.0, seed=0)
    corpus = generate_corpus(cfg)
    assert corpus.summary["unsatisfied"]["negative(e2,e1)"] > 0
    assert corpus.summary["achieved"]["negative(e2,e1)"] == 0


@pytest.mark.parametrize("bad", [dict(p_negated=1.5), dict(mode="fr"), dict(class_mix={"cause": 1.0}),
                                 dict(lumens_per_document=(0, 2))])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        GenConfig(**bad)
