"""Deterministic rule-based sentence segmentation.

A sentence ends at a run of ``.``, ``!`` or ``?`` (plus any closing quotes or
brackets) followed by whitespace and then an uppercase letter of any script or
a digit, optionally behind an opening quote or bracket. A blank line always
ends a sentence. A lone period does not end a sentence when the token before
it is a listed abbreviation, or a capital initial followed by a name-like
token (another initial, or a capitalized word that is not a common sentence
opener). Ellipses never end a sentence, and decimals never do because the
terminator must be followed by whitespace.

Offsets are indices into the Python string (code points).
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Protocol

_TERMINATOR = re.compile(r"""([.!?]+)(["'”’)\]]*)(?=\s+["'“‘(\[]?(\w))""")
_PARAGRAPH = re.compile(r"\n[ \t\r\f\v]*\n")
_OPENERS = "\"'“‘(["
# Words that usually start a sentence rather than continue a name.
_SENTENCE_OPENERS = frozenset("""
a an and as at but by for from he her his however i if in it its maybe my no not of on or perhaps
probably she so that the their then there these they this those to we what when which who yes you
""".split())


@dataclass(frozen=True)
class SentenceSpan:
    start: int
    end: int
    index: int

    def text_of(self, text: str) -> str:
        return text[self.start:self.end]


class Segmenter(Protocol):
    def segment(self, text: str) -> list[SentenceSpan]: ...


@lru_cache(maxsize=None)
def load_abbreviations() -> frozenset[str]:
    raw = resources.files("markerconf").joinpath("resources/abbreviations.txt").read_text(encoding="utf-8")
    return frozenset(
        line.strip().lower() for line in raw.splitlines() if line.strip() and not line.startswith("#")
    )


class RuleSegmenter:
    """Reference segmenter. Stateless; safe to share between threads."""

    def __init__(self, abbreviations: frozenset[str] | None = None):
        self.abbreviations = load_abbreviations() if abbreviations is None else abbreviations

    def _suppressed(self, text: str, term_start: int, terminator: str) -> bool:
        if len(terminator) > 1 and set(terminator) == {"."}:
            return True  # ellipsis
        if terminator != ".":
            return False
        ws = max(text.rfind(c, 0, term_start) for c in " \t\n\r\f\v")
        token = text[ws + 1:term_start].lstrip(_OPENERS)
        if not token:
            return False
        if len(token) == 1 and token.isalpha() and token.isupper():
            return self._name_follows(text, term_start + 1)
        return (token + ".").lower() in self.abbreviations

    @staticmethod
    def _name_follows(text: str, pos: int) -> bool:
        """After a capital initial: is the next token another initial or a
        capitalized word that is not a common sentence opener?"""
        nxt = text[pos:].split(None, 1)
        if not nxt:
            return False
        word = nxt[0].lstrip(_OPENERS)
        if len(word) == 2 and word[0].isupper() and word[1] == ".":
            return True
        word = word.rstrip(".,;:!?\"')]”’")
        return len(word) > 1 and word[0].isupper() and word.lower() not in _SENTENCE_OPENERS

    def boundaries(self, text: str) -> list[int]:
        cuts = set()
        for m in _TERMINATOR.finditer(text):
            nxt = m.group(3)
            if not (nxt.isupper() or nxt.isdigit()):
                continue
            if not self._suppressed(text, m.start(1), m.group(1)):
                cuts.add(m.end(2))
        for m in _PARAGRAPH.finditer(text):
            cuts.add(m.start())
        return sorted(cuts)

    def segment(self, text: str) -> list[SentenceSpan]:
        spans: list[SentenceSpan] = []
        prev = 0
        for cut in self.boundaries(text) + [len(text)]:
            piece = text[prev:cut]
            stripped = piece.strip()
            if stripped:
                start = prev + (len(piece) - len(piece.lstrip()))
                spans.append(SentenceSpan(start, start + len(stripped), len(spans)))
            prev = cut
        return spans


_default = RuleSegmenter()


def segment(text: str) -> list[SentenceSpan]:
    return _default.segment(text)


def split_sentences(text: str, segmenter: Segmenter | None = None) -> list[str]:
    seg = segmenter or _default
    return [s.text_of(text) for s in seg.segment(text)]
