"""Completion backends: a generic chat-completions HTTP client and a
deterministic mock for tests and desk-scale runs.

HTTP request (``POST {base_url}/chat/completions``)::

    {"model": ..., "messages": [{"role": "system", ...}?, {"role": "user", "content": prompt}],
     "temperature": ..., "max_tokens": ..., "stop": [...]?}

Response: ``{"choices": [{"message": {"content": "..."}}]}``. The bearer token
is read from the environment variable named by ``token_env`` at call time.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import threading
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Protocol

import requests

from ..errors import BackendError, TransportError
from .parsing import normalize_marker
from .types import Decode, JudgeTask

DEFAULT_TOKEN_ENV = "MARKERCONF_API_TOKEN"


class Backend(Protocol):
    model_id: str

    def complete(
        self, prompt: str, decode: Decode, *, system: str | None = None, task: JudgeTask | None = None
    ) -> str: ...


class HTTPBackend:
    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        token_env: str = DEFAULT_TOKEN_ENV,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_id = model
        self.token_env = token_env
        self.timeout = timeout
        self.session = session or requests.Session()

    def request_body(self, prompt: str, decode: Decode, system: str | None = None) -> dict:
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": prompt})
        body = {
            "model": self.model_id,
            "messages": messages,
            "temperature": decode.temperature,
            "max_tokens": decode.max_output_tokens,
        }
        if decode.stop_sequences:
            body["stop"] = list(decode.stop_sequences)
        return body

    def complete(self, prompt, decode, *, system=None, task=None) -> str:
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(self.token_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self.session.post(
                f"{self.base_url}/chat/completions",
                data=json.dumps(self.request_body(prompt, decode, system)),
                headers=headers,
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise TransportError(f"request to {self.base_url} failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransportError(f"{self.base_url} returned HTTP {resp.status_code}")
        if resp.status_code != 200:
            raise BackendError(f"{self.base_url} returned HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion response from {self.base_url}") from exc
        return content or ""


@dataclass(frozen=True)
class LexiconEntry:
    phrase: str
    canonical: str
    decisiveness: float


class Lexicon:
    """Hedge phrase list used by the rule-mode mock judge."""

    def __init__(self, entries: list[LexiconEntry]):
        self.entries = {e.phrase: e for e in entries}
        self._canonical = {normalize_marker(e.phrase): e for e in entries}
        alternation = "|".join(re.escape(p) for p in sorted(self.entries, key=lambda p: (-len(p), p)))
        self._pattern = re.compile(rf"(?<![\w'])(?:{alternation})(?![\w'])", re.IGNORECASE)

    @classmethod
    def from_text(cls, text: str) -> "Lexicon":
        entries = []
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            phrase, canonical, dec = line.split("\t")
            entries.append(LexiconEntry(phrase.lower(), canonical, float(dec)))
        return cls(entries)

    def find(self, text: str) -> list[tuple[str, LexiconEntry]]:
        """Non-overlapping hedge hits in order of appearance, longest phrase first."""
        plain = text.replace("’", "'").replace("‘", "'")
        hits = []
        for m in self._pattern.finditer(plain):
            surface = m.group(0)
            entry = self.entries[surface.lower()]
            before = plain[: m.start()].rstrip()
            sentence_start = not before or before[-1] in ".!?\"“("
            if surface[0].isupper() and not sentence_start and not entry.phrase.startswith("i"):
                continue  # e.g. the month "May"
            hits.append((normalize_marker(surface), entry))
        return hits

    def canonical(self, marker: str) -> str:
        entry = self._canonical.get(normalize_marker(marker))
        return entry.canonical if entry else normalize_marker(marker)

    def strip(self, text: str) -> str:
        plain = text.replace("’", "'").replace("‘", "'")
        return self._pattern.sub(" ", plain)


@lru_cache(maxsize=1)
def default_lexicon() -> Lexicon:
    raw = resources.files("markerconf").joinpath("resources/hedge_lexicon.tsv").read_text(encoding="utf-8")
    return Lexicon.from_text(raw)


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


def _content_words(lexicon: Lexicon, text: str) -> str:
    return " ".join(re.sub(r"[^\w]+", " ", lexicon.strip(text).lower()).split())


class MockBackend:
    """Deterministic offline backend.

    Replies come from, in order: the ``fail`` hook (raise ``TransportError``),
    ``scripted`` replies keyed by :func:`prompt_hash` of the rendered prompt,
    the ``reply`` hook, and finally the rule mode:

    * consistency: the assertion minus hedges is a substring of the sampled
      response minus hedges -> "Yes"; an assertion that is nothing but hedges
      -> "N/A"; otherwise "No".
    * decisiveness: the lowest lexicon decisiveness among the hedges in the
      sentence, or 1.0 when there are none.
    * accuracy: "True" when any gold answer occurs in the prediction.
    * extraction and standardization: lexicon lookup.

    Stop sequences are honoured the way a real endpoint would.
    """

    def __init__(
        self,
        model_id: str = "mock-judge",
        *,
        scripted: dict[str, str] | None = None,
        rule_mode: bool = True,
        lexicon: Lexicon | None = None,
        fail: Callable[[str, JudgeTask | None], bool] | None = None,
        reply: Callable[[str, JudgeTask | None], str | None] | None = None,
    ):
        self.model_id = model_id
        self.scripted = dict(scripted or {})
        self.rule_mode = rule_mode
        self.lexicon = lexicon or default_lexicon()
        self.fail = fail
        self.reply = reply
        self.calls = 0
        self._lock = threading.Lock()

    def script(self, prompt: str, reply: str) -> None:
        self.scripted[prompt_hash(prompt)] = reply

    def complete(self, prompt, decode, *, system=None, task=None) -> str:
        with self._lock:
            self.calls += 1
        if self.fail is not None and self.fail(prompt, task):
            raise TransportError("injected mock failure")
        out = self.scripted.get(prompt_hash(prompt))
        if out is None and self.reply is not None:
            out = self.reply(prompt, task)
        if out is None:
            if not self.rule_mode or task is None:
                raise BackendError("mock backend has no reply for this prompt")
            out = self._rule_reply(task)
        for stop in decode.stop_sequences:
            idx = out.find(stop)
            if idx >= 0:
                out = out[:idx]
        return out

    def _rule_reply(self, task: JudgeTask) -> str:
        inp = task.inputs
        lex = self.lexicon
        if task.kind == "consistency":
            assertion = _content_words(lex, inp["sentence"])
            if not assertion:
                return "N/A"
            context = _content_words(lex, inp["sampled_response"])
            return "Yes" if f" {assertion} " in f" {context} " else "No"
        if task.kind == "decisiveness":
            hits = lex.find(inp["text"])
            return f"{min(e.decisiveness for _, e in hits) if hits else 1.0}"
        if task.kind == "accuracy":
            pred = inp["pred"].casefold()
            return "True" if any(g.casefold() in pred for g in inp["targets"] if g) else "False"
        if task.kind == "extract_markers":
            return "; ".join(m for m, _ in lex.find(inp["text"])) + " ####"
        if task.kind == "standardize_markers":
            mapping = {m: lex.canonical(m) for m in inp["markers"]}
            return json.dumps(mapping, ensure_ascii=False)
        raise BackendError(f"mock backend cannot handle task kind {task.kind!r}")
