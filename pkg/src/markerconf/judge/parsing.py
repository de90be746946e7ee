"""Parsers turning raw judge replies into typed verdicts."""

from __future__ import annotations

import ast
import json
import logging
import re

from ..errors import JudgeParseError

logger = logging.getLogger(__name__)

YES, NA, NO = "yes", "na", "no"
INCONSISTENCY = {YES: 0.0, NA: 0.5, NO: 1.0}

_FIRST_WORD = re.compile(r"[a-z]+(?:/[a-z]+)?")
_FLOAT = re.compile(r"[-+]?(?:\d+\.\d*|\.\d+|\d+)(?:[eE][-+]?\d+)?")
_PRONOUN_I = re.compile(r"\bi\b(?=$|[\s'])")
_EDGE_PUNCT = " \t\n\r\"'`.,;:!?*()[]{}<>“”‘’"


def _first_word(raw: str) -> str:
    m = _FIRST_WORD.search(raw.strip().lower())
    return m.group(0) if m else ""


def parse_consistency(raw: str) -> str:
    """Tri-state from the first word; anything other than yes/no is ``na``."""
    word = _first_word(raw)
    if word == "yes":
        return YES
    if word == "no":
        return NO
    return NA


def parse_decisiveness(raw: str) -> float:
    m = _FLOAT.search(raw)
    if m is None:
        raise JudgeParseError("decisiveness", raw)
    value = float(m.group(0))
    if not 0.0 <= value <= 1.0:
        clamped = min(1.0, max(0.0, value))
        logger.warning("decisiveness %r outside [0, 1]; clamped to %s", value, clamped)
        value = clamped
    return value


def parse_accuracy(raw: str) -> bool:
    word = _first_word(raw)
    if word == "true":
        return True
    if word == "false":
        return False
    raise JudgeParseError("accuracy", raw)


def normalize_marker(marker: str) -> str:
    """Lowercase a marker except for the pronoun "I", strip edge punctuation
    and collapse whitespace."""
    s = marker.replace("’", "'").replace("‘", "'")
    s = " ".join(s.split()).strip(_EDGE_PUNCT)
    s = s.lower()
    return _PRONOUN_I.sub("I", s)


def parse_markers(raw: str) -> list[str]:
    """Parse a semicolon-separated hedge list terminated by ``####``.

    Without a terminator only the first line is read. A reply with commas but
    no semicolons is split on commas.
    """
    text = raw.split("####", 1)[0] if "####" in raw else raw.strip().split("\n", 1)[0]
    text = text.strip()
    if text.lower().startswith("hedges:"):
        text = text[len("hedges:"):]
    text = text.strip()
    if not text or text.startswith("<your"):
        return []
    sep = ";" if ";" in text or "," not in text else ","
    out = []
    for part in text.split(sep):
        m = normalize_marker(part)
        if m:
            out.append(m)
    return out


def _load_mapping(raw: str) -> dict:
    start = raw.find("{")
    if start < 0:
        raise JudgeParseError("standardize_markers", raw, "no JSON object in reply")
    body = raw[start:]
    end = body.rfind("}")
    body = body + "}" if end < 0 else body[: end + 1]
    try:
        obj = json.loads(body)
    except json.JSONDecodeError:
        try:
            obj = ast.literal_eval(body)
        except (ValueError, SyntaxError):
            raise JudgeParseError("standardize_markers", raw, "reply is not a JSON object") from None
    if not isinstance(obj, dict):
        raise JudgeParseError("standardize_markers", raw, "reply is not a JSON object")
    return obj


def parse_standardization(raw: str, markers: list[str]) -> dict[str, str]:
    """Map every input marker to its canonical form.

    Keys are matched after normalization. Missing inputs raise; extra keys are
    dropped.
    """
    obj = _load_mapping(raw)
    by_norm = {}
    for k, v in obj.items():
        if isinstance(k, str) and isinstance(v, str):
            by_norm.setdefault(normalize_marker(k), normalize_marker(v))
    missing = [m for m in markers if normalize_marker(m) not in by_norm]
    if missing:
        raise JudgeParseError("standardize_markers", raw, f"mapping lacks inputs {missing}")
    out = {}
    for m in markers:
        canonical = by_norm[normalize_marker(m)]
        out[m] = canonical or normalize_marker(m)
    extra = set(by_norm) - {normalize_marker(m) for m in markers}
    if extra:
        logger.debug("dropping %d extra keys from standardization reply", len(extra))
    return out
