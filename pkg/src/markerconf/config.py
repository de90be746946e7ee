"""Run configuration, loaded from a YAML or JSON document.

Example::

    corpus: data/corpus.jsonl        # queries (+ responses once generated)
    out: runs/demo
    k: 20
    threshold: 10
    sweep: [10, 20, 50, 100]
    system_prompt_id: generic
    seed: 0
    judge: {backend: http, base_url: "https://api.example/v1", model: judge-model}
    task_model: {backend: mock, model: mock-task}

The API token is never part of the file; HTTP backends read it from the
environment variable named by ``token_env`` (default ``MARKERCONF_API_TOKEN``).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .judge.prompts import SYSTEM_PROMPT_IDS
from .metrics import AGGREGATIONS, PAIR_NORMALIZATIONS, RESPONSE_REDUCTIONS

BACKENDS = ("mock", "http")

# Settings that change where or how fast results are produced, but not the
# results themselves. They are left out of the config hash so that a run
# moved to another directory keeps its hash.
_UNHASHED = ("out", "parallelism", "corpus", "annotations", "cache_dir")


@dataclass(frozen=True)
class BackendConfig:
    backend: str = "mock"
    model: str = "mock"
    base_url: str | None = None
    token_env: str = "MARKERCONF_API_TOKEN"
    timeout: float = 60.0
    attempts: int = 3
    backoff: float = 1.0
    temperature: float | None = None
    max_output_tokens: int | None = None

    def validate(self, name: str) -> None:
        if self.backend not in BACKENDS:
            raise ConfigError(f"{name}.backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.backend == "http" and not self.base_url:
            raise ConfigError(f"{name}.base_url is required for the http backend")
        if self.attempts < 1:
            raise ConfigError(f"{name}.attempts must be >= 1")


@dataclass(frozen=True)
class RunConfig:
    corpus: str | None = None
    annotations: str | None = None
    out: str = "out"
    k: int = 20
    threshold: int = 10
    sweep: tuple[int, ...] = ()
    system_prompt_id: str = "generic"
    aggregation: str = "marker"
    exclude_no_hedge: bool = False
    cmae_normalization: str = "directed"
    response_reduction: str = "mean"
    reference_split: str = "train"
    min_shared_datasets: int | None = None
    parallelism: int = 1
    seed: int = 0
    max_examples: int = 5000
    failure_ceiling: float = 0.01
    score_decisiveness: bool = True
    score_accuracy: bool = True
    detect_punts: bool = False
    cache_dir: str | None = None
    judge: BackendConfig = field(default_factory=lambda: BackendConfig(model="mock-judge"))
    task_model: BackendConfig = field(default_factory=lambda: BackendConfig(model="mock-task"))

    def validate(self) -> "RunConfig":
        if not isinstance(self.k, int) or self.k < 1:
            raise ConfigError(f"k must be an integer >= 1, got {self.k!r}")
        if not isinstance(self.threshold, int) or self.threshold < 1:
            raise ConfigError(f"threshold must be an integer >= 1, got {self.threshold!r}")
        if any(not isinstance(t, int) or t < 1 for t in self.sweep):
            raise ConfigError("sweep values must be integers >= 1")
        if list(self.sweep) != sorted(set(self.sweep)):
            raise ConfigError(f"sweep must be strictly ascending, got {list(self.sweep)}")
        if self.system_prompt_id not in SYSTEM_PROMPT_IDS:
            raise ConfigError(f"system_prompt_id must be one of {SYSTEM_PROMPT_IDS}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}")
        if self.cmae_normalization not in PAIR_NORMALIZATIONS:
            raise ConfigError(f"cmae_normalization must be one of {PAIR_NORMALIZATIONS}")
        if self.response_reduction not in RESPONSE_REDUCTIONS:
            raise ConfigError(f"response_reduction must be one of {RESPONSE_REDUCTIONS}")
        if self.reference_split not in ("train", "test"):
            raise ConfigError("reference_split must be 'train' or 'test'")
        if self.parallelism < 1:
            raise ConfigError("parallelism must be >= 1")
        if self.max_examples < 1:
            raise ConfigError("max_examples must be >= 1")
        if not 0.0 <= self.failure_ceiling <= 1.0:
            raise ConfigError("failure_ceiling must lie in [0, 1]")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        self.judge.validate("judge")
        self.task_model.validate("task_model")
        return self

    @property
    def thresholds(self) -> tuple[int, ...]:
        return self.sweep or (self.threshold,)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["sweep"] = list(self.sweep)
        return d

    def config_hash(self) -> str:
        d = {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def provenance(self) -> dict[str, Any]:
        return {"config_hash": self.config_hash(), "seed": self.seed}

    def with_overrides(self, **overrides: Any) -> "RunConfig":
        return replace(self, **{k: v for k, v in overrides.items() if v is not None}).validate()


def _backend(raw: Any, name: str, default_model: str) -> BackendConfig:
    if raw is None:
        return BackendConfig(model=default_model)
    if not isinstance(raw, dict):
        raise ConfigError(f"{name} must be a mapping")
    known = {f.name for f in fields(BackendConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown {name} settings: {unknown}")
    return BackendConfig(**{"model": default_model, **raw})


def config_from_dict(raw: dict[str, Any], base_dir: Path | None = None) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a mapping")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {unknown}")
    data = dict(raw)
    data["judge"] = _backend(data.get("judge"), "judge", "mock-judge")
    data["task_model"] = _backend(data.get("task_model"), "task_model", "mock-task")
    if "sweep" in data:
        sweep = data["sweep"] or ()
        if not isinstance(sweep, (list, tuple)):
            raise ConfigError("sweep must be a list")
        data["sweep"] = tuple(sweep)
    if base_dir is not None:
        for key in ("corpus", "annotations", "cache_dir", "out"):
            if data.get(key) and not Path(data[key]).is_absolute():
                data[key] = str(base_dir / data[key])
    try:
        cfg = RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path: str | Path | None) -> RunConfig:
    """Read a YAML or JSON config; relative paths resolve against its folder."""
    if path is None:
        return RunConfig().validate()
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from None
    return config_from_dict(raw or {}, base_dir=path.parent)
