"""Marker internal confidence (MIC) tables.

A MIC table holds, for one (model, dataset, split), the mean intrinsic
confidence of the sentences carrying each canonical marker, keeping only
markers seen at least ``threshold`` times.

Export columns: model_id, dataset_id, split, T, marker, mic, support, std.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Sequence

from .annotate import NO_HEDGE, AnnotatedCorpus, SentenceAnnotation
from .corpus import write_jsonl

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 10
EXPORT_COLUMNS = ("model_id", "dataset_id", "split", "T", "marker", "mic", "support", "std")


@dataclass(frozen=True)
class MicEntry:
    marker: str
    mic: float
    support: int
    std: float


@dataclass(frozen=True)
class MicTable:
    model_id: str
    dataset_id: str
    split: str
    threshold: int
    entries: dict[str, MicEntry] = field(default_factory=dict)

    def __contains__(self, marker: str) -> bool:
        return marker in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def markers(self) -> list[str]:
        return sorted(self.entries)

    def mic(self, marker: str) -> float:
        return self.entries[marker].mic

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {
                "model_id": self.model_id,
                "dataset_id": self.dataset_id,
                "split": self.split,
                "T": self.threshold,
                "marker": e.marker,
                "mic": e.mic,
                "support": e.support,
                "std": e.std,
            }
            for e in (self.entries[m] for m in self.markers())
        ]


def build_mic_table(
    annotations: Iterable[SentenceAnnotation],
    threshold: int = DEFAULT_THRESHOLD,
    *,
    model_id: str = "",
    dataset_id: str = "",
    split: str = "train",
) -> MicTable:
    if threshold < 1:
        raise ValueError("threshold must be >= 1")
    by_marker: dict[str, list[float]] = {}
    for a in annotations:
        if not a.usable:
            continue
        by_marker.setdefault(a.marker, []).append(a.confidence)
    if not by_marker:
        logger.warning("no usable annotations for %s/%s/%s; MIC table is empty", model_id, dataset_id, split)
    entries = {}
    for marker in sorted(by_marker):
        confs = by_marker[marker]
        if len(confs) < threshold:
            continue
        mean = math.fsum(confs) / len(confs)
        var = math.fsum((c - mean) ** 2 for c in confs) / len(confs)
        entries[marker] = MicEntry(marker, mean, len(confs), math.sqrt(var))
    return MicTable(model_id, dataset_id, split, threshold, entries)


def build_mic_tables(
    annotated: AnnotatedCorpus, threshold: int = DEFAULT_THRESHOLD, split: str = "train"
) -> dict[str, MicTable]:
    """One table per dataset, from the given split only."""
    return {
        d: build_mic_table(anns, threshold, model_id=annotated.model_id, dataset_id=d, split=split)
        for d, anns in annotated.split(split).items()
    }


def shared_markers(tables: Sequence[MicTable]) -> set[str]:
    tables = list(tables)
    if len(tables) < 2:
        raise ValueError("shared_markers needs at least two tables")
    common = set(tables[0].entries)
    for t in tables[1:]:
        common &= set(t.entries)
    return common


def exclude_no_hedge(table: MicTable) -> MicTable:
    if NO_HEDGE not in table.entries:
        return table
    return replace(table, entries={m: e for m, e in table.entries.items() if m != NO_HEDGE})


def write_mic_tables(tables: Iterable[MicTable], jsonl_path: str | Path, csv_path: str | Path,
                     extra: dict[str, Any] | None = None, meta: dict[str, Any] | None = None) -> None:
    """Write MIC entries as line-delimited JSON and as CSV. ``extra`` columns
    (e.g. run metadata) are appended to every row; ``meta`` becomes a leading
    ``{"kind": "meta"}`` line of the JSONL file."""
    rows = [{**r, **(extra or {})} for t in tables for r in t.to_records()]
    header = [{"kind": "meta", **meta}] if meta else []
    write_jsonl(jsonl_path, header + rows)
    columns = list(EXPORT_COLUMNS) + list(extra or {})
    Path(csv_path).parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({c: _fmt(r[c]) for c in columns})


def _fmt(v: Any) -> Any:
    return repr(v) if isinstance(v, float) else v
