"""Query/response corpus records and their line-delimited file format.

Each line of a corpus file is one JSON object tagged by ``kind``::

    {"kind": "query", "dataset_id", "split", "query_id", "prompt_text",
     "gold_answers", "task_kind", ...}
    {"kind": "response", "model_id", "dataset_id", "split", "query_id",
     "response_text", "samples", "system_prompt_id", "punt", ...}

An optional ``{"kind": "meta", ...}`` line carries run metadata. Fields not
listed above are kept in ``extra`` and written back unchanged.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import CorpusParseError, CorpusReferenceError, CorpusValidationError

logger = logging.getLogger(__name__)

SPLITS = ("train", "test")
TASK_KINDS = (
    "qa",
    "qa_unanswerable",
    "qa_context",
    "multiple_choice",
    "nli",
    "hallucination_detection",
)

_QUERY_FIELDS = ("dataset_id", "split", "query_id", "prompt_text", "gold_answers", "task_kind")
_RESPONSE_FIELDS = (
    "model_id",
    "dataset_id",
    "split",
    "query_id",
    "response_text",
    "samples",
    "system_prompt_id",
    "punt",
)


@dataclass(frozen=True)
class QueryRecord:
    dataset_id: str
    split: str
    query_id: str
    prompt_text: str
    gold_answers: tuple[str, ...] = ()
    task_kind: str = "qa"
    extra: dict[str, Any] = field(default_factory=dict, compare=True)

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.dataset_id, self.split, self.query_id)

    def validate(self) -> None:
        if self.split not in SPLITS:
            raise CorpusValidationError(f"query {self.key}: split must be one of {SPLITS}, got {self.split!r}")
        if self.task_kind not in TASK_KINDS:
            raise CorpusValidationError(f"query {self.key}: unknown task_kind {self.task_kind!r}")
        if not self.prompt_text:
            raise CorpusValidationError(f"query {self.key}: prompt_text is empty")
        if not all(isinstance(g, str) for g in self.gold_answers):
            raise CorpusValidationError(f"query {self.key}: gold_answers must be strings")

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "kind": "query",
            "dataset_id": self.dataset_id,
            "split": self.split,
            "query_id": self.query_id,
            "prompt_text": self.prompt_text,
            "gold_answers": list(self.gold_answers),
            "task_kind": self.task_kind,
        }
        for k in sorted(self.extra):
            out[k] = self.extra[k]
        return out


@dataclass(frozen=True)
class ResponseRecord:
    model_id: str
    dataset_id: str
    split: str
    query_id: str
    response_text: str
    samples: tuple[str, ...]
    system_prompt_id: str = "generic"
    punt: bool = False
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def query_key(self) -> tuple[str, str, str]:
        return (self.dataset_id, self.split, self.query_id)

    @property
    def key(self) -> tuple[str, str, str, str, str]:
        return (self.model_id, self.system_prompt_id, self.dataset_id, self.split, self.query_id)

    def validate(self, k: int | None = None) -> None:
        if not self.response_text:
            raise CorpusValidationError(f"response {self.key}: response_text is empty")
        if not all(isinstance(s, str) for s in self.samples):
            raise CorpusValidationError(f"response {self.key}: samples must be strings")
        if k is not None and len(self.samples) != k:
            raise CorpusValidationError(
                f"response {self.key}: expected {k} samples, got {len(self.samples)}"
            )
        if not isinstance(self.punt, bool):
            raise CorpusValidationError(f"response {self.key}: punt must be a boolean")

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {
            "kind": "response",
            "model_id": self.model_id,
            "dataset_id": self.dataset_id,
            "split": self.split,
            "query_id": self.query_id,
            "response_text": self.response_text,
            "samples": list(self.samples),
            "system_prompt_id": self.system_prompt_id,
            "punt": self.punt,
        }
        for k in sorted(self.extra):
            out[k] = self.extra[k]
        return out


@dataclass(frozen=True)
class SplitSpec:
    dataset_id: str
    has_test: bool
    max_examples: int = 5000


@dataclass
class Corpus:
    queries: list[QueryRecord] = field(default_factory=list)
    responses: list[ResponseRecord] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        self._index: dict[tuple[str, str, str], QueryRecord] | None = None

    def __len__(self) -> int:
        return len(self.queries) + len(self.responses)

    def __iter__(self) -> Iterator[QueryRecord | ResponseRecord]:
        yield from self.queries
        yield from self.responses

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Corpus):
            return NotImplemented
        return (self.queries, self.responses, self.meta) == (other.queries, other.responses, other.meta)

    def query_for(self, response: ResponseRecord) -> QueryRecord:
        if self._index is None or len(self._index) != len(self.queries):
            self._index = {q.key: q for q in self.queries}
        try:
            return self._index[response.query_key]
        except KeyError:
            raise CorpusReferenceError(f"response {response.key} refers to unknown query {response.query_key}") from None

    def model_ids(self) -> list[str]:
        return sorted({r.model_id for r in self.responses})

    def split_specs(self, max_examples: int = 5000) -> dict[str, SplitSpec]:
        """Per-dataset split availability. Datasets without a test split are
        flagged so split-dependent metrics can skip them."""
        splits: dict[str, set[str]] = {}
        for q in self.queries:
            splits.setdefault(q.dataset_id, set()).add(q.split)
        return {
            d: SplitSpec(dataset_id=d, has_test="test" in s, max_examples=max_examples)
            for d, s in sorted(splits.items())
        }

    def validate(self, k: int | None = None) -> None:
        seen: set[tuple[str, str, str]] = set()
        for q in self.queries:
            q.validate()
            if q.key in seen:
                raise CorpusValidationError(f"duplicate query_id {q.key}")
            seen.add(q.key)
        seen_r: set[tuple[str, ...]] = set()
        for r in self.responses:
            r.validate(k)
            if r.query_key not in seen:
                raise CorpusReferenceError(f"response {r.key} refers to unknown query {r.query_key}")
            if r.key in seen_r:
                raise CorpusValidationError(f"duplicate response {r.key}")
            seen_r.add(r.key)


def _query_from_json(obj: dict[str, Any]) -> QueryRecord:
    missing = [f for f in _QUERY_FIELDS if f not in obj]
    if missing:
        raise CorpusValidationError(f"query record missing fields {missing}")
    gold = obj["gold_answers"]
    if not isinstance(gold, list):
        raise CorpusValidationError(f"query {obj.get('query_id')!r}: gold_answers must be a list")
    extra = {k: v for k, v in obj.items() if k not in _QUERY_FIELDS and k != "kind"}
    return QueryRecord(
        dataset_id=str(obj["dataset_id"]),
        split=obj["split"],
        query_id=str(obj["query_id"]),
        prompt_text=obj["prompt_text"],
        gold_answers=tuple(gold),
        task_kind=obj["task_kind"],
        extra=extra,
    )


def _response_from_json(obj: dict[str, Any]) -> ResponseRecord:
    missing = [f for f in _RESPONSE_FIELDS if f not in obj]
    if missing:
        raise CorpusValidationError(f"response record missing fields {missing}")
    samples = obj["samples"]
    if not isinstance(samples, list):
        raise CorpusValidationError(f"response {obj.get('query_id')!r}: samples must be a list")
    extra = {k: v for k, v in obj.items() if k not in _RESPONSE_FIELDS and k != "kind"}
    return ResponseRecord(
        model_id=str(obj["model_id"]),
        dataset_id=str(obj["dataset_id"]),
        split=obj["split"],
        query_id=str(obj["query_id"]),
        response_text=obj["response_text"],
        samples=tuple(samples),
        system_prompt_id=obj["system_prompt_id"],
        punt=obj["punt"],
        extra=extra,
    )


def read_jsonl(path: str | Path) -> Iterator[tuple[int, dict[str, Any]]]:
    """Yield ``(line_number, object)`` for each non-blank line."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusParseError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise CorpusParseError(path, lineno, "expected a JSON object")
            yield lineno, obj


def dumps_line(obj: dict[str, Any]) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(", ", ": ")) + "\n"


def write_jsonl(path: str | Path, objs: Iterable[dict[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for obj in objs:
            fh.write(dumps_line(obj))


def load_corpus(path: str | Path, k: int | None = None) -> Corpus:
    """Load and validate a corpus file.

    ``k`` is the expected number of samples per response. When omitted, the
    first response fixes it and every other response must agree.
    """
    corpus = Corpus()
    for lineno, obj in read_jsonl(path):
        kind = obj.get("kind")
        try:
            if kind == "query":
                rec = _query_from_json(obj)
                rec.validate()
                corpus.queries.append(rec)
            elif kind == "response":
                rec = _response_from_json(obj)
                if k is None:
                    k = len(rec.samples)
                rec.validate(k)
                corpus.responses.append(rec)
            elif kind == "meta":
                corpus.meta.update({key: v for key, v in obj.items() if key != "kind"})
            else:
                raise CorpusParseError(path, lineno, f"unknown record kind {kind!r}")
        except CorpusValidationError as exc:
            raise CorpusValidationError(f"{path}:{lineno}: {exc}") from None
    corpus.validate(k)
    return corpus


def save_corpus(records: Corpus | Iterable[QueryRecord | ResponseRecord], path: str | Path) -> None:
    if isinstance(records, Corpus):
        meta = [{"kind": "meta", **records.meta}] if records.meta else []
        objs = meta + [r.to_json() for r in records]
    else:
        objs = [r.to_json() for r in records]
    try:
        write_jsonl(path, objs)
    except OSError as exc:
        raise OSError(f"cannot write corpus to {path}: {exc}") from exc


def cap_splits(queries: Iterable[QueryRecord], max_examples: int, seed: int) -> list[QueryRecord]:
    """Keep at most ``max_examples`` randomly chosen queries per (dataset, split).

    Selection depends only on ``seed`` and the record keys; original order is kept.
    """
    if max_examples < 1:
        raise ValueError("max_examples must be positive")
    queries = list(queries)
    groups: dict[tuple[str, str], list[QueryRecord]] = {}
    for q in queries:
        groups.setdefault((q.dataset_id, q.split), []).append(q)
    keep: set[tuple[str, str, str]] = set()
    for (dataset_id, split), items in groups.items():
        if len(items) <= max_examples:
            keep.update(q.key for q in items)
            continue
        rng = random.Random(f"{seed}:{dataset_id}:{split}")
        ordered = sorted(items, key=lambda q: q.query_id)
        keep.update(q.key for q in rng.sample(ordered, max_examples))
        logger.info("capped %s/%s from %d to %d queries", dataset_id, split, len(items), max_examples)
    return [q for q in queries if q.key in keep]
