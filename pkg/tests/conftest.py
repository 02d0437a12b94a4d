import pytest

from cadrcn.dataset import RelationLabel
from cadrcn.text import Lexicon, recognize_entities, tokenize

EXAMPLE = "左前降支中段40%狭窄，右前降支、右回旋支未见明显狭窄。"
EXAMPLE_TOKENS = ["左前降支", "中段", "40%", "狭窄", "，", "右前降支", "、", "右回旋支", "未见", "明显", "狭窄", "。"]


@pytest.fixture(scope="session")
def zh():
    return Lexicon.default("zh")


@pytest.fixture(scope="session")
def ascii_lexicon():
    return Lexicon.default("ascii")


@pytest.fixture
def example(zh):
    """Tokens, entities and the gold relation triples of the example sentence."""
    tokens = [t.surface for t in tokenize(EXAMPLE, zh)]
    ents = recognize_entities(tokens, zh)
    by_start = {e.start: e for e in ents}
    L = RelationLabel
    triples = [
        (by_start[0], L.MODIFIER, by_start[3]),
        (by_start[0], L.POSITION, by_start[1]),
        (by_start[2], L.PERCENTAGE_E2E1, by_start[3]),
        (by_start[5], L.MODIFIER, by_start[10]),
        (by_start[7], L.MODIFIER, by_start[10]),
        (by_start[8], L.NEGATIVE, by_start[10]),
    ]
    return tokens, ents, triples


def pytest_terminal_summary(terminalreporter):
    from _acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
