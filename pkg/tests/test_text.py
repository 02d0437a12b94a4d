import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cadrcn.text import (
    Entity, Lexicon, PERCENT_RE, parse_percentage, recognize_entities, split_sentences, tokenize, type_tags,
)

from conftest import EXAMPLE, EXAMPLE_TOKENS


def surfaces(text, lexicon):
    return [t.surface for t in tokenize(text, lexicon)]


def test_example_head_clause(zh):
    assert surfaces("左前降支中段40%狭窄", zh) == ["左前降支", "中段", "40%", "狭窄"]


def test_example_full_sentence(zh):
    assert surfaces(EXAMPLE, zh) == EXAMPLE_TOKENS


def test_example_entities(zh):
    ents = recognize_entities(EXAMPLE_TOKENS, zh)
    assert [(e.surface, e.type) for e in ents] == [
        ("左前降支", "Lumen"), ("中段", "Position"), ("40%", "Percentage"), ("狭窄", "Modifier"),
        ("右前降支", "Lumen"), ("右回旋支", "Lumen"), ("未见", "Negative"), ("狭窄", "Modifier"),
    ]
    assert [e.start for e in ents] == [0, 1, 2, 3, 5, 7, 8, 10]


def test_single_term_is_one_token(zh):
    toks = tokenize("左回旋支", zh)
    assert [(t.surface, t.start, t.end) for t in toks] == [("左回旋支", 0, 4)]


def test_unmatched_runs(zh):
    toks = tokenize("冠脉造影 显示良好", zh)
    assert [t.surface for t in toks] == ["冠脉造影", "显示良好"]


def test_longest_match_wins(zh):
    # 左前降支 contains the shorter alias 前降支; the longer term must win
    assert surfaces("左前降支", zh) == ["左前降支"]
    assert surfaces("前降支", zh) == ["前降支"]


@pytest.mark.parametrize("surface, is_pct", [("100%", True), ("99.5%", True), ("40", False), ("1000%", False)])
def test_percentage_pattern(zh, surface, is_pct):
    ents = recognize_entities(surfaces(surface, zh), zh)
    assert any(e.type == "Percentage" for e in ents) is is_pct


def test_parse_percentage():
    assert parse_percentage("40%") == 40.0
    assert parse_percentage("99.5%") == 99.5
    with pytest.raises(ValueError):
        parse_percentage("40")


def test_ascii_mode(ascii_lexicon):
    toks = surfaces("LAD mid 40% stenosis, RCA no stenosis.", ascii_lexicon)
    ents = recognize_entities(toks, ascii_lexicon)
    types = [e.type for e in ents]
    assert types == ["Lumen", "Position", "Percentage", "Modifier", "Lumen", "Negative", "Modifier"]


def test_ascii_terms_need_word_boundaries(ascii_lexicon):
    # "RCAX" is not the lumen RCA
    assert recognize_entities(surfaces("RCAX", ascii_lexicon), ascii_lexicon) == []


def test_split_sentences_keeps_decimals():
    assert split_sentences("LAD 99.5% stenosis. RCA normal.") == ["LAD 99.5% stenosis.", "RCA normal."]
    assert split_sentences("左主干正常。前降支狭窄。") == ["左主干正常。", "前降支狭窄。"]


def test_type_tags():
    ents = [Entity(0, 0, "Lumen", "a"), Entity(2, 3, "Modifier", "cd")]
    assert type_tags(5, ents) == ["Lumen", "none", "Modifier", "Modifier", "none"]


def test_entity_validation():
    with pytest.raises(ValueError):
        Entity(0, 0, "Drug", "x")
    with pytest.raises(ValueError):
        Entity(3, 2, "Lumen", "x")


def test_lexicon_round_trip(zh, tmp_path):
    path = tmp_path / "lex.json"
    import json

    path.write_text(json.dumps(zh.to_dict(), ensure_ascii=False), encoding="utf-8")
    again = Lexicon.load(path)
    assert again.to_dict() == zh.to_dict()
    assert again.canonical("前降支") == "左前降支"
    assert again.side("右回旋支") == "right"


def test_lexicon_rejects_duplicates():
    with pytest.raises(ValueError):
        Lexicon.from_dict({"lumen": [{"term": "A", "side": "left"}, {"term": "A", "side": "left"}],
                           "modifier": [], "negative": [], "position": []})


# -- properties --------------------------------------------------------------

def _alphabet(lexicon):
    terms = list(lexicon.lumen) + list(lexicon.modifier) + list(lexicon.negative) + list(lexicon.position)
    pieces = terms + ["40%", "100%", "7.5%", "明显", "，", "。", " ", "、", "可见", "12", "%", "x"]
    return st.lists(st.sampled_from(pieces), min_size=1, max_size=20).map("".join)


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_tokens_tile_text(zh, data):
    text = data.draw(_alphabet(zh))
    toks = tokenize(text, zh)
    assert "".join(t.surface for t in toks) == "".join(text.split())
    prev = 0
    for t in toks:
        assert t.start >= prev and text[t.start:t.end] == t.surface and t.surface.strip() == t.surface
        prev = t.end


@settings(max_examples=200, deadline=None)
@given(data=st.data())
def test_recognition_idempotent_and_reconstructible(zh, data):
    text = data.draw(_alphabet(zh))
    toks = tokenize(text, zh)
    first = recognize_entities(toks, zh)
    assert first == recognize_entities(toks, zh)
    for e in first:
        assert "".join(t.surface for t in toks[e.start:e.end + 1]) == e.surface
        if e.type == "Percentage":
            assert 0 <= parse_percentage(e.surface) <= 999.999


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 100), st.sampled_from(["", ".5", ".25"]))
def test_percentage_surfaces_in_range(value, frac):
    surface = f"{value}{frac}%" if value < 100 else "100%"
    assert PERCENT_RE.fullmatch(surface)
    assert 0 < parse_percentage(surface) <= 100
