from __future__ import annotations

import logging
import time
from pathlib import Path
from typing import Any, Callable

from ..errors import JudgeError, JudgeParseError, TransportError
from . import parsing
from .backends import Backend
from .cache import JudgeCache, cache_key
from .prompts import JUDGE_TEMPLATE_IDS, format_list, judge_template, render
from .types import DEFAULT_DECODE, Decode, JudgeTask, JudgeVerdict

logger = logging.getLogger(__name__)


class Judge:
    """All LLM-as-a-judge calls go through here.

    Transport failures are retried ``attempts`` times with exponential
    backoff. Parse failures are not retried, except for marker
    standardization, which gets one fresh call when the mapping is incomplete.
    """

    def __init__(
        self,
        backend: Backend,
        cache: JudgeCache | None = None,
        *,
        decode: dict[str, Decode] | None = None,
        template_ids: dict[str, str] | None = None,
        template_dir: Path | None = None,
        attempts: int = 3,
        backoff: float = 1.0,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.backend = backend
        self.cache = cache
        self.decode = {**DEFAULT_DECODE, **(decode or {})}
        self.template_ids = {**JUDGE_TEMPLATE_IDS, **(template_ids or {})}
        self.template_dir = template_dir
        self.attempts = attempts
        self.backoff = backoff
        self.sleep = sleep

    @property
    def model_id(self) -> str:
        return self.backend.model_id

    def task(self, kind: str, inputs: dict[str, Any], values: dict[str, str]) -> JudgeTask:
        template_id = self.template_ids[kind]
        prompt = render(judge_template(template_id, self.template_dir), **values)
        return JudgeTask(kind, template_id, prompt, self.decode[kind], inputs)

    def key(self, task: JudgeTask) -> str:
        return cache_key(task.kind, task.template_id, task.rendered_prompt, task.decode.as_dict(), self.model_id)

    def _call_backend(self, task: JudgeTask) -> str:
        for attempt in range(self.attempts):
            try:
                return self.backend.complete(task.rendered_prompt, task.decode, task=task)
            except TransportError as exc:
                if attempt == self.attempts - 1:
                    raise JudgeError(f"{task.kind} call failed after {self.attempts} attempts: {exc}") from exc
                delay = self.backoff * 2**attempt
                logger.debug("%s transport error (%s); retrying in %.2fs", task.kind, exc, delay)
                self.sleep(delay)
        raise AssertionError("unreachable")

    def _store(self, task: JudgeTask, raw: str) -> None:
        if self.cache is not None:
            self.cache.put(self.key(task), raw, kind=task.kind, template_id=task.template_id, judge_model=self.model_id)

    def run(self, task: JudgeTask, parse: Callable[[str], Any]) -> JudgeVerdict:
        if self.cache is not None:
            raw = self.cache.get(self.key(task))
            if raw is not None:
                return JudgeVerdict(task.kind, raw, parse(raw), cached=True)
        raw = self._call_backend(task)
        if task.kind != "standardize_markers":
            self._store(task, raw)
            return JudgeVerdict(task.kind, raw, parse(raw))
        # Only complete mappings are cached, so a cache hit always parses.
        try:
            parsed = parse(raw)
        except JudgeParseError as exc:
            logger.warning("standardization reply invalid (%s); retrying once", exc)
            raw = self._call_backend(task)
            parsed = parse(raw)
        self._store(task, raw)
        return JudgeVerdict(task.kind, raw, parsed)

    def judge_consistency(self, assertion: str, context: str) -> str:
        if not assertion or not context:
            raise ValueError("assertion and context must be non-empty")
        task = self.task(
            "consistency",
            {"sentence": assertion, "sampled_response": context},
            {"sentence": assertion, "sampled_response": context},
        )
        return self.run(task, parsing.parse_consistency).parsed

    def judge_decisiveness(self, sentence: str) -> float:
        if not sentence:
            raise ValueError("sentence must be non-empty")
        task = self.task("decisiveness", {"text": sentence}, {"text": sentence})
        return self.run(task, parsing.parse_decisiveness).parsed

    def judge_accuracy(self, prediction: str, gold_answers: list[str]) -> bool:
        if not gold_answers:
            raise ValueError("gold_answers must be non-empty")
        task = self.task(
            "accuracy",
            {"pred": prediction, "targets": list(gold_answers)},
            {"pred": prediction, "targets": format_list(gold_answers)},
        )
        return self.run(task, parsing.parse_accuracy).parsed

    def extract_markers(self, sentence: str) -> list[str]:
        if not sentence:
            raise ValueError("sentence must be non-empty")
        task = self.task("extract_markers", {"text": sentence}, {"text": sentence})
        return self.run(task, parsing.parse_markers).parsed

    def standardize_markers(self, markers: list[str]) -> dict[str, str]:
        markers = list(dict.fromkeys(markers))
        if not markers:
            raise ValueError("markers must be non-empty")
        task = self.task(
            "standardize_markers",
            {"markers": markers},
            {"extracted_markers_list": format_list(markers)},
        )
        return self.run(task, lambda raw: parsing.parse_standardization(raw, markers)).parsed
