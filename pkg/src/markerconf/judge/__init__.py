"""LLM-as-a-judge client with caching and pluggable backends."""

from .backends import HTTPBackend, Lexicon, MockBackend, default_lexicon, prompt_hash
from .cache import JudgeCache, cache_key
from .client import Judge
from .parsing import INCONSISTENCY, NA, NO, YES, normalize_marker
from .types import DEFAULT_DECODE, Decode, JudgeTask, JudgeVerdict

__all__ = [
    "DEFAULT_DECODE",
    "Decode",
    "HTTPBackend",
    "INCONSISTENCY",
    "Judge",
    "JudgeCache",
    "JudgeTask",
    "JudgeVerdict",
    "Lexicon",
    "MockBackend",
    "NA",
    "NO",
    "YES",
    "cache_key",
    "default_lexicon",
    "normalize_marker",
    "prompt_hash",
]
