from __future__ import annotations

import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from markerconf.segmenter import RuleSegmenter, load_abbreviations, segment, split_sentences

FIXTURE = Path(__file__).parent / "fixtures" / "segmentation_50.jsonl"


def test_two_sentences():
    assert split_sentences("Hello. World.") == ["Hello.", "World."]


def test_empty():
    assert segment("") == []
    assert segment("   \n ") == []


def test_abbreviation_does_not_split():
    assert split_sentences("I think it was Dr. Smith. Perhaps in 1999.") == [
        "I think it was Dr. Smith.", "Perhaps in 1999.",
    ]


def test_abbreviation_list_has_titles_months_and_latin():
    abbrevs = load_abbreviations()
    for token in ("dr.", "mr.", "mrs.", "jan.", "sept.", "e.g.", "i.e."):
        assert token in abbrevs


@pytest.mark.parametrize("text,expected", [
    ("Pi is about 3.14 in value. Yes.", ["Pi is about 3.14 in value.", "Yes."]),
    ("Well... I am not sure. Maybe.", ["Well... I am not sure.", "Maybe."]),
    ("Is it? Yes! Definitely.", ["Is it?", "Yes!", "Definitely."]),
    ("He said \"No.\" Then he left.", ["He said \"No.\"", "Then he left."]),
    ("Written by J. K. Rowling. A classic.", ["Written by J. K. Rowling.", "A classic."]),
    ("Perhaps X. Y is Z.", ["Perhaps X.", "Y is Z."]),
    ("George W. Bush won.", ["George W. Bush won."]),
    ("The answer is B. The others are wrong.", ["The answer is B.", "The others are wrong."]),
    ("Use e.g. apples. Or pears.", ["Use e.g. apples.", "Or pears."]),
    ("lowercase. continues here", ["lowercase. continues here"]),
    ("First line\n\nsecond paragraph", ["First line", "second paragraph"]),
    ("It was 1999. 2000 came next.", ["It was 1999.", "2000 came next."]),
])
def test_rules(text, expected):
    assert split_sentences(text) == expected


def test_offsets_are_code_points():
    text = "Café é bien. Über alles."
    spans = segment(text)
    assert [s.text_of(text) for s in spans] == ["Café é bien.", "Über alles."]
    assert spans[1].start == text.index("Über")


def test_fifty_sentence_fixture():
    rows = [json.loads(line) for line in FIXTURE.read_text(encoding="utf-8").splitlines() if line.strip()]
    assert sum(len(r["sentences"]) for r in rows) == 50
    for r in rows:
        assert split_sentences(r["text"]) == r["sentences"], r["text"]


words = st.sampled_from([
    "the", "Dr.", "Mr.", "it", "3.14", "1999", "I", "think", "Perhaps", "maybe", "J.", "e.g.",
    "Yes", "well...", "\"quoted\"", "(aside)", "Über", "café", "Smith", "ok",
])
punct = st.sampled_from([".", "!", "?", "", ",", "...", ".\"", ".)"])
sep = st.sampled_from([" ", " ", "  ", "\n", "\n\n", "\t"])


@st.composite
def texts(draw):
    parts = []
    for _ in range(draw(st.integers(0, 12))):
        parts.append(draw(words) + draw(punct) + draw(sep))
    return draw(st.sampled_from(["", " ", "\n"])) + "".join(parts)


PROPERTY = settings(max_examples=500, deadline=None)


@PROPERTY
@given(st.one_of(texts(), st.text(max_size=80)))
def test_coverage_and_ordering(text):
    spans = segment(text)
    covered = [False] * len(text)
    prev_end = 0
    for i, s in enumerate(spans):
        assert s.index == i
        assert prev_end <= s.start < s.end <= len(text)
        assert not s.text_of(text).isspace()
        for j in range(s.start, s.end):
            covered[j] = True
        prev_end = s.end
    for j, ch in enumerate(text):
        if not ch.isspace():
            assert covered[j]
    # Reconstruction: spans plus the whitespace between them give back the text.
    rebuilt, pos = [], 0
    for s in spans:
        assert text[pos:s.start].strip() == ""
        rebuilt.append(text[pos:s.end])
        pos = s.end
    assert text[pos:].strip() == ""
    assert "".join(rebuilt) + text[pos:] == text


@PROPERTY
@given(texts())
def test_idempotent(text):
    for sentence in split_sentences(text):
        assert split_sentences(sentence) == [sentence]


@PROPERTY
@given(texts())
def test_deterministic(text):
    assert segment(text) == RuleSegmenter().segment(text)
