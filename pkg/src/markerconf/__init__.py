"""Marker internal confidence (MIC) tables and stability metrics for the
epistemic markers language models use."""

from __future__ import annotations

from .annotate import NO_HEDGE, AnnotatedCorpus, AnnotateOptions, SentenceAnnotation, annotate_corpus
from .corpus import Corpus, QueryRecord, ResponseRecord, load_corpus, save_corpus
from .errors import (
    BackendError,
    ConfigError,
    DataError,
    InsufficientDataError,
    MarkerConfError,
    UndefinedStatisticError,
)
from .metrics import MetricReport, MetricValue, compute_report
from .mic import MicEntry, MicTable, build_mic_table, build_mic_tables
from .segmenter import RuleSegmenter, segment

__version__ = "0.1.0"

__all__ = [
    "NO_HEDGE",
    "AnnotatedCorpus",
    "AnnotateOptions",
    "BackendError",
    "ConfigError",
    "Corpus",
    "DataError",
    "InsufficientDataError",
    "MarkerConfError",
    "MetricReport",
    "MetricValue",
    "MicEntry",
    "MicTable",
    "QueryRecord",
    "ResponseRecord",
    "RuleSegmenter",
    "SentenceAnnotation",
    "UndefinedStatisticError",
    "annotate_corpus",
    "build_mic_table",
    "build_mic_tables",
    "compute_report",
    "load_corpus",
    "save_corpus",
    "segment",
]
