from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Any

KINDS = ("consistency", "decisiveness", "accuracy", "extract_markers", "standardize_markers")


@dataclass(frozen=True)
class Decode:
    temperature: float = 0.0
    max_output_tokens: int = 16
    stop_sequences: tuple[str, ...] = ()

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    def as_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["stop_sequences"] = list(self.stop_sequences)
        return d


# Judge calls decode greedily; extraction and standardization stop on the
# sequences their prompts are designed around.
DEFAULT_DECODE = {
    "consistency": Decode(0.0, 8),
    "decisiveness": Decode(0.0, 16),
    "accuracy": Decode(0.0, 8),
    "extract_markers": Decode(0.0, 128, ("Answer:",)),
    "standardize_markers": Decode(0.0, 4096, ("}",)),
}


@dataclass(frozen=True)
class JudgeTask:
    kind: str
    template_id: str
    rendered_prompt: str
    decode: Decode
    inputs: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown judge task kind {self.kind!r}")
        if not self.rendered_prompt:
            raise ValueError("rendered_prompt must be non-empty")


@dataclass(frozen=True)
class JudgeVerdict:
    kind: str
    raw_text: str
    parsed: Any
    cached: bool = False
