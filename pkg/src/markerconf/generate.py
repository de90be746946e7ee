"""Response generation: one primary response plus K samples per query.

Task prompts are rendered from the per-task-kind templates. Query fields
other than ``prompt_text`` (the question) come from the record's extra
fields: ``context``, ``choices``, ``text_1``, ``text_2``, ``response``.
Multiple-choice options are shuffled with a seed derived from the run seed
and the query key.

Generation is resumable: records already present in the output corpus are
kept and only missing ones are requested. A manifest lists what is still
missing after a run.
"""

from __future__ import annotations

import logging
import random
import string
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, Sequence

from .corpus import QueryRecord, ResponseRecord
from .errors import BackendError, CorpusValidationError, TransportError
from .judge.backends import HTTPBackend
from .judge.prompts import format_list, system_prompt, task_template
from .judge.types import Decode

logger = logging.getLogger(__name__)

TASK_DECODE = Decode(temperature=1.0, max_output_tokens=256, stop_sequences=())


def _choice_labels(n: int) -> list[str]:
    return list(string.ascii_uppercase[:n])


def shuffled_choices(query: QueryRecord, seed: int) -> list[str]:
    choices = list(query.extra.get("choices", []))
    random.Random(f"{seed}:{query.dataset_id}:{query.split}:{query.query_id}").shuffle(choices)
    return choices


def render_task_prompt(query: QueryRecord, seed: int = 0) -> str:
    template = task_template(query.task_kind)
    values: dict[str, str] = {"question": query.prompt_text}
    for key, value in query.extra.items():
        if isinstance(value, str):
            values[key] = value
    if "choices" in query.extra:
        choices = shuffled_choices(query, seed)
        values["choices_list"] = format_list(f"{lab}. {c}" for lab, c in zip(_choice_labels(len(choices)), choices))
    needed = {name for _, name, _, _ in string.Formatter().parse(template) if name}
    missing = sorted(needed - set(values))
    if missing:
        raise CorpusValidationError(f"query {query.key}: task kind {query.task_kind!r} needs fields {missing}")
    return template.format(**values)


class TaskModel(Protocol):
    model_id: str

    def generate(self, prompt: str, system: str, *, query: QueryRecord, sample: int) -> str:
        """``sample`` is -1 for the primary response, 0..K-1 for resamples."""
        ...


class HTTPTaskModel:
    def __init__(self, backend: HTTPBackend, decode: Decode = TASK_DECODE, *, attempts: int = 3,
                 backoff: float = 1.0, sleep: Callable[[float], None] = time.sleep):
        self.backend = backend
        self.model_id = backend.model_id
        self.decode = decode
        self.attempts = attempts
        self.backoff = backoff
        self.sleep = sleep

    def generate(self, prompt: str, system: str, *, query: QueryRecord, sample: int) -> str:
        for attempt in range(self.attempts):
            try:
                return self.backend.complete(prompt, self.decode, system=system)
            except TransportError:
                if attempt == self.attempts - 1:
                    raise
                self.sleep(self.backoff * 2**attempt)
        raise AssertionError("unreachable")


# Hedge prefixes the mock task model puts in front of its answer, keyed by the
# upper edge of the latent confidence band they are used for.
_MOCK_LADDER = (
    (0.25, ("I could be mistaken,", "Possibly")),
    (0.45, ("Perhaps", "Maybe")),
    (0.65, ("I think", "Probably")),
    (0.85, ("I believe", "Most likely")),
    (1.01, ("", "Almost certainly")),
)


@dataclass
class MockTaskModel:
    """Seeded offline task model.

    Each query gets a latent confidence p. The primary answer and each sample
    repeat the gold answer with probability p and a distractor otherwise, so
    the mock judge's consistency verdicts track p. The hedge in front of the
    primary answer is drawn from a ladder keyed by p (with some noise).
    """

    model_id: str = "mock-task"
    seed: int = 0
    extra_sentence_rate: float = 0.5
    multi_marker_rate: float = 0.05
    calls: int = 0
    fail: Callable[[QueryRecord, int], bool] | None = None

    def _rng(self, query: QueryRecord, tag: str) -> random.Random:
        return random.Random(f"{self.seed}:{self.model_id}:{query.dataset_id}:{query.split}:{query.query_id}:{tag}")

    def _answer(self, query: QueryRecord, rng: random.Random, p: float) -> str:
        gold = query.gold_answers[0] if query.gold_answers else "option one"
        return gold if rng.random() < p else f"unknown-{rng.randrange(3)}"

    def generate(self, prompt: str, system: str, *, query: QueryRecord, sample: int) -> str:
        self.calls += 1
        if self.fail is not None and self.fail(query, sample):
            raise TransportError("injected task-model failure")
        qrng = self._rng(query, "query")
        p = qrng.random()
        extra = qrng.choice(("This is a common question.", "It seems to be well documented."))
        with_extra = qrng.random() < self.extra_sentence_rate
        rng = self._rng(query, str(sample))
        answer = self._answer(query, rng, p)
        if sample >= 0:
            plain = "This is a common question." if extra.startswith("This") else "It is said to be well documented."
            return f"The answer is {answer}." + (f" {plain}" if rng.random() < p else "")
        ladder = next(hedges for edge, hedges in _MOCK_LADDER if p < edge)
        if rng.random() < 0.2:
            ladder = rng.choice(_MOCK_LADDER)[1]
        hedge = rng.choice(ladder)
        main = f"{hedge} the answer is {answer}." if hedge else f"The answer is {answer}."
        if rng.random() < self.multi_marker_rate:
            main = f"Perhaps the answer is probably {answer}."
        return f"{main} {extra}" if with_extra else main


@dataclass
class GenerationResult:
    responses: list[ResponseRecord]
    missing: list[dict[str, Any]] = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.missing


def generate_responses(
    queries: Sequence[QueryRecord],
    model: TaskModel,
    k: int,
    *,
    system_prompt_id: str = "generic",
    seed: int = 0,
    existing: Sequence[ResponseRecord] = (),
    parallelism: int = 1,
) -> GenerationResult:
    """Generate the responses that ``existing`` does not already hold.

    Returns every response in query order; queries whose calls failed after
    retries are listed in ``missing``.
    """
    if k < 1:
        raise CorpusValidationError(f"K must be >= 1, got {k}")
    system = system_prompt(system_prompt_id)
    have = {
        r.query_key: r
        for r in existing
        if r.model_id == model.model_id and r.system_prompt_id == system_prompt_id and len(r.samples) == k
    }
    todo = [q for q in queries if q.key not in have]
    decode = getattr(model, "decode", TASK_DECODE)

    def one(q: QueryRecord) -> ResponseRecord | str:
        try:
            prompt = render_task_prompt(q, seed)
            primary = model.generate(prompt, system, query=q, sample=-1)
            samples = tuple(model.generate(prompt, system, query=q, sample=i) for i in range(k))
        except (TransportError, BackendError) as exc:
            return str(exc)
        if not primary or not all(samples):
            return "empty completion"
        return ResponseRecord(
            model_id=model.model_id,
            dataset_id=q.dataset_id,
            split=q.split,
            query_id=q.query_id,
            response_text=primary,
            samples=samples,
            system_prompt_id=system_prompt_id,
            punt=False,
            extra={"decode": decode.as_dict()},
        )

    if parallelism > 1 and len(todo) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(one, todo))
    else:
        results = [one(q) for q in todo]

    fresh: dict[tuple, ResponseRecord] = {}
    missing = []
    for q, res in zip(todo, results):
        if isinstance(res, ResponseRecord):
            fresh[q.key] = res
        else:
            logger.warning("generation failed for %s: %s", q.key, res)
            missing.append({"dataset_id": q.dataset_id, "split": q.split, "query_id": q.query_id, "error": res})
    ordered = [have.get(q.key) or fresh.get(q.key) for q in queries]
    return GenerationResult([r for r in ordered if r is not None], missing)
