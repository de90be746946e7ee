"""Per-sentence annotation: segmentation, marker extraction and
standardization, intrinsic confidence, decisiveness and correctness.

Annotation file format (one JSON object per line, after an optional
``{"kind": "meta"}`` header)::

    {"model_id", "dataset_id", "split", "query_id", "sent_idx", "text",
     "marker_state", "marker", "confidence", "decisiveness", "correct",
     "punt", "raw_markers"}

``marker`` is the canonical marker, ``"<no_hedge>"``, or null for
multi-marker sentences. ``decisiveness`` and ``correct`` are null when not
scored.
"""

from __future__ import annotations

import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterable, Sequence, TypeVar

from .corpus import Corpus, ResponseRecord, read_jsonl, write_jsonl
from .errors import AnnotationFailureError, CorpusValidationError, JudgeError, JudgeParseError
from .judge import INCONSISTENCY, Judge
from .segmenter import RuleSegmenter, Segmenter

logger = logging.getLogger(__name__)

NO_HEDGE = "<no_hedge>"
NO_HEDGE_STATE = "no_hedge"
SINGLE = "single"
MULTI = "multi_discarded"
MARKER_STATES = (NO_HEDGE_STATE, SINGLE, MULTI)

DEFAULT_K = 20

_PUNT_PATTERNS = re.compile(
    r"\b(i (?:do not|don't) know|i cannot answer|i can't answer|unable to answer|"
    r"not enough information|cannot be determined|(?:is|question is) unanswerable|"
    r"i'm not able to answer|i am not able to answer|no way to know)\b",
    re.IGNORECASE,
)

T = TypeVar("T")


@dataclass(frozen=True)
class SentenceAnnotation:
    model_id: str
    dataset_id: str
    split: str
    query_id: str
    sent_idx: int
    text: str
    marker_state: str
    marker: str | None
    confidence: float | None = None
    decisiveness: float | None = None
    correct: bool | None = None
    punt: bool = False
    raw_markers: tuple[str, ...] = ()

    @property
    def response_key(self) -> tuple[str, str, str, str]:
        return (self.model_id, self.dataset_id, self.split, self.query_id)

    @property
    def usable(self) -> bool:
        """Carries a marker (or no_hedge) and a confidence."""
        return self.marker_state != MULTI and self.confidence is not None

    def to_json(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "dataset_id": self.dataset_id,
            "split": self.split,
            "query_id": self.query_id,
            "sent_idx": self.sent_idx,
            "text": self.text,
            "marker_state": self.marker_state,
            "marker": self.marker,
            "confidence": self.confidence,
            "decisiveness": self.decisiveness,
            "correct": self.correct,
            "punt": self.punt,
            "raw_markers": list(self.raw_markers),
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> "SentenceAnnotation":
        ann = cls(
            model_id=obj["model_id"],
            dataset_id=obj["dataset_id"],
            split=obj["split"],
            query_id=obj["query_id"],
            sent_idx=int(obj["sent_idx"]),
            text=obj["text"],
            marker_state=obj["marker_state"],
            marker=obj.get("marker"),
            confidence=obj.get("confidence"),
            decisiveness=obj.get("decisiveness"),
            correct=obj.get("correct"),
            punt=bool(obj.get("punt", False)),
            raw_markers=tuple(obj.get("raw_markers", ())),
        )
        ann.validate()
        return ann

    def validate(self) -> None:
        if self.marker_state not in MARKER_STATES:
            raise CorpusValidationError(f"unknown marker_state {self.marker_state!r}")
        if self.marker_state == SINGLE and not self.marker:
            raise CorpusValidationError("single-marker annotation needs a marker")
        if self.marker_state == NO_HEDGE_STATE and self.marker != NO_HEDGE:
            raise CorpusValidationError(f"no_hedge annotation must carry marker {NO_HEDGE!r}")
        for name in ("confidence", "decisiveness"):
            v = getattr(self, name)
            if v is not None and not 0.0 <= v <= 1.0:
                raise CorpusValidationError(f"{name} {v} outside [0, 1]")


@dataclass
class AnnotatedCorpus:
    model_id: str
    k: int
    annotations: list[SentenceAnnotation] = field(default_factory=list)
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def groups(self) -> dict[tuple[str, str], list[SentenceAnnotation]]:
        out: dict[tuple[str, str], list[SentenceAnnotation]] = {}
        for a in self.annotations:
            out.setdefault((a.dataset_id, a.split), []).append(a)
        return dict(sorted(out.items()))

    def split(self, split: str) -> dict[str, list[SentenceAnnotation]]:
        """Annotations of one split keyed by dataset."""
        return {d: anns for (d, s), anns in self.groups().items() if s == split}

    def dataset_ids(self) -> list[str]:
        return sorted({a.dataset_id for a in self.annotations})


@dataclass(frozen=True)
class AnnotateOptions:
    score_decisiveness: bool = True
    score_accuracy: bool = True
    failure_ceiling: float = 0.01
    parallelism: int = 1
    standardize_batch: int = 50
    detect_punts: bool = False


def intrinsic_confidence(sentence: str, samples: Sequence[str], judge: Judge) -> float:
    """One minus the mean inconsistency of the sentence against the K samples
    (yes -> 0, n/a -> 0.5, no -> 1)."""
    if not samples:
        raise ValueError("samples must be non-empty")
    total = 0.0
    for sample in samples:
        verdict = judge.judge_consistency(sentence, sample) if sample else "na"
        total += INCONSISTENCY[verdict]
    return 1.0 - total / len(samples)


def marker_state(canonical_markers: Iterable[str]) -> tuple[str, str | None]:
    distinct = set(canonical_markers)
    if not distinct:
        return NO_HEDGE_STATE, NO_HEDGE
    if len(distinct) == 1:
        return SINGLE, distinct.pop()
    return MULTI, None


def annotate_sentence(text: str, judge: Judge) -> tuple[str, str | None]:
    """Extract and standardize the markers of one sentence and classify it."""
    markers = judge.extract_markers(text)
    if not markers:
        return NO_HEDGE_STATE, NO_HEDGE
    mapping = judge.standardize_markers(markers)
    return marker_state(mapping[m] for m in markers)


def is_punt(text: str) -> bool:
    return bool(_PUNT_PATTERNS.search(text))


def _pmap(fn: Callable[[T], Any], items: Sequence[T], parallelism: int) -> list[Any]:
    if parallelism <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(fn, items))


def _guard(fn: Callable[[T], Any]) -> Callable[[T], tuple[bool, Any]]:
    def wrapped(x):
        try:
            return True, fn(x)
        except (JudgeError, JudgeParseError) as exc:
            return False, str(exc)

    return wrapped


@dataclass
class _Sentence:
    response: ResponseRecord
    idx: int
    text: str
    raw_markers: tuple[str, ...] = ()
    canonical: tuple[str, ...] = ()
    failed: str | None = None


def annotate_corpus(
    corpus: Corpus,
    judge: Judge,
    options: AnnotateOptions = AnnotateOptions(),
    *,
    model_id: str | None = None,
    segmenter: Segmenter | None = None,
) -> AnnotatedCorpus:
    """Annotate every sentence of one model's responses.

    Sentences whose judge calls fail are left out and listed in
    ``diagnostics["excluded"]``. ``AnnotationFailureError`` is raised (with
    the partial result attached) when the excluded fraction exceeds
    ``options.failure_ceiling``.
    """
    models = corpus.model_ids()
    if model_id is None:
        if len(models) > 1:
            raise ValueError(f"corpus holds several models {models}; pass model_id")
        model_id = models[0] if models else ""
    responses = [r for r in corpus.responses if r.model_id == model_id]
    k = len(responses[0].samples) if responses else 0
    seg = segmenter or RuleSegmenter()
    par = options.parallelism

    sentences = [
        _Sentence(r, span.index, span.text_of(r.response_text))
        for r in responses
        for span in seg.segment(r.response_text)
    ]

    for s, (ok, out) in zip(sentences, _pmap(_guard(lambda s: judge.extract_markers(s.text)), sentences, par)):
        if ok:
            s.raw_markers = tuple(out)
        else:
            s.failed = f"extract_markers: {out}"

    unique = sorted({m for s in sentences if s.failed is None for m in s.raw_markers})
    batches = [unique[i:i + options.standardize_batch] for i in range(0, len(unique), options.standardize_batch)]
    mapping: dict[str, str] = {}
    failed_markers: dict[str, str] = {}
    for batch, (ok, out) in zip(batches, _pmap(_guard(judge.standardize_markers), batches, par)):
        if ok:
            mapping.update(out)
        else:
            failed_markers.update({m: out for m in batch})
    for s in sentences:
        if s.failed is None:
            bad = [m for m in s.raw_markers if m in failed_markers]
            if bad:
                s.failed = f"standardize_markers: {failed_markers[bad[0]]}"
            else:
                s.canonical = tuple(mapping[m] for m in s.raw_markers)

    states = {id(s): marker_state(s.canonical) for s in sentences if s.failed is None}
    scored = [s for s in sentences if s.failed is None and states[id(s)][0] != MULTI]

    conf_results = _pmap(_guard(lambda s: intrinsic_confidence(s.text, s.response.samples, judge)), scored, par)
    confidence: dict[int, float] = {}
    for s, (ok, out) in zip(scored, conf_results):
        if ok:
            confidence[id(s)] = out
        else:
            s.failed = f"consistency: {out}"

    decisiveness: dict[int, float] = {}
    dec_failures = 0
    if options.score_decisiveness:
        targets = [s for s in scored if s.failed is None]
        for s, (ok, out) in zip(targets, _pmap(_guard(lambda s: judge.judge_decisiveness(s.text)), targets, par)):
            if ok:
                decisiveness[id(s)] = out
            else:
                dec_failures += 1
                logger.warning("decisiveness unavailable for %s/%s: %s", s.response.query_id, s.idx, out)

    correct: dict[tuple, bool] = {}
    acc_failures = 0
    if options.score_accuracy:
        graded = [r for r in responses if corpus.query_for(r).gold_answers]
        results = _pmap(
            _guard(lambda r: judge.judge_accuracy(r.response_text, list(corpus.query_for(r).gold_answers))),
            graded,
            par,
        )
        for r, (ok, out) in zip(graded, results):
            if ok:
                correct[r.key] = out
            else:
                acc_failures += 1

    annotations = []
    excluded = []
    for s in sentences:
        r = s.response
        if s.failed is not None:
            excluded.append(
                {"dataset_id": r.dataset_id, "split": r.split, "query_id": r.query_id, "sent_idx": s.idx, "reason": s.failed}
            )
            continue
        state, marker = states[id(s)]
        punt = r.punt or (options.detect_punts and is_punt(r.response_text))
        annotations.append(
            SentenceAnnotation(
                model_id=model_id,
                dataset_id=r.dataset_id,
                split=r.split,
                query_id=r.query_id,
                sent_idx=s.idx,
                text=s.text,
                marker_state=state,
                marker=marker,
                confidence=confidence.get(id(s)),
                decisiveness=decisiveness.get(id(s)),
                correct=correct.get(r.key),
                punt=punt,
                raw_markers=s.raw_markers,
            )
        )

    total = len(sentences)
    counts = {st: sum(1 for a in annotations if a.marker_state == st) for st in MARKER_STATES}
    diagnostics = {
        "model_id": model_id,
        "k": k,
        "responses": len(responses),
        "total_sentences": total,
        **counts,
        "excluded_by_error": len(excluded),
        "failure_rate": len(excluded) / total if total else 0.0,
        "decisiveness_failures": dec_failures,
        "accuracy_failures": acc_failures,
        "excluded": excluded,
    }
    if not responses:
        logger.warning("no responses for model %r; annotation is empty", model_id)
    result = AnnotatedCorpus(model_id, k, annotations, diagnostics)
    if total and diagnostics["failure_rate"] > options.failure_ceiling:
        raise AnnotationFailureError(
            f"{len(excluded)}/{total} sentences failed annotation "
            f"(ceiling {options.failure_ceiling:.2%})",
            partial=result,
        )
    return result


def hedges_per_sentence(items: Iterable[SentenceAnnotation | int]) -> tuple[float, float]:
    """Mean and population std of the raw (pre-discard) marker count per sentence."""
    counts = [len(x.raw_markers) if isinstance(x, SentenceAnnotation) else int(x) for x in items]
    if not counts:
        logger.warning("hedges_per_sentence: no sentences")
        return 0.0, 0.0
    mean = sum(counts) / len(counts)
    var = sum((c - mean) ** 2 for c in counts) / len(counts)
    return mean, math.sqrt(var)


def save_annotations(
    annotated: AnnotatedCorpus | Iterable[SentenceAnnotation], path: str | Path, meta: dict[str, Any] | None = None
) -> None:
    anns = annotated.annotations if isinstance(annotated, AnnotatedCorpus) else list(annotated)
    header = [{"kind": "meta", **meta}] if meta else []
    write_jsonl(path, header + [a.to_json() for a in anns])


def load_annotations(path: str | Path) -> tuple[list[SentenceAnnotation], dict[str, Any]]:
    anns, meta = [], {}
    for lineno, obj in read_jsonl(path):
        if obj.get("kind") == "meta":
            meta.update({k: v for k, v in obj.items() if k != "kind"})
            continue
        try:
            anns.append(SentenceAnnotation.from_json(obj))
        except (KeyError, CorpusValidationError) as exc:
            raise CorpusValidationError(f"{path}:{lineno}: bad annotation: {exc}") from None
    return anns, meta


def group_by_model(annotations: Iterable[SentenceAnnotation], k: int = 0) -> dict[str, AnnotatedCorpus]:
    out: dict[str, AnnotatedCorpus] = {}
    for a in annotations:
        out.setdefault(a.model_id, AnnotatedCorpus(a.model_id, k)).annotations.append(a)
    return dict(sorted(out.items()))
