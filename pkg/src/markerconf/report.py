"""Plot-ready tables behind the analysis figures.

Column layouts (every row also carries the run's ``config_hash`` and ``seed``
when written by the CLI):

* ``kde.csv``: model_id, dataset_id, x, density (MIC density on a fixed grid)
* ``mic_correct.csv`` / ``mic_incorrect.csv``: model_id, dataset_id, stratum,
  marker, mic, support, accuracy
* ``mic_faithful.csv`` / ``mic_unfaithful.csv``: same layout, strata split on
  response faithfulness F >= 0.75
* ``mf_scatter.csv``: model_id, dataset_id, marker, mic, mf
* ``heatmap.csv``: model_id, marker, dataset_id, mic, std, support
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import stats
from .annotate import AnnotatedCorpus, SentenceAnnotation
from .metrics import FAITHFUL_THRESHOLD, dataset_accuracy, faithfulness, mf_divergence
from .mic import MicTable, build_mic_table

logger = logging.getLogger(__name__)

KDE_COLUMNS = ("model_id", "dataset_id", "x", "density")
STRATUM_COLUMNS = ("model_id", "dataset_id", "stratum", "marker", "mic", "support", "accuracy")
MF_COLUMNS = ("model_id", "dataset_id", "marker", "mic", "mf")
HEATMAP_COLUMNS = ("model_id", "marker", "dataset_id", "mic", "std", "support")


@dataclass
class FigureData:
    """Rows per output file name, plus the files that were skipped and why."""

    tables: dict[str, tuple[tuple[str, ...], list[dict[str, Any]]]] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)


def kde_rows(tables: Mapping[str, MicTable], points: int = stats.KDE_GRID_POINTS) -> list[dict[str, Any]]:
    grid = stats.kde_grid(points=points)
    rows = []
    for d in sorted(tables):
        t = tables[d]
        mics = [t.mic(m) for m in t.markers()]
        if not mics:
            logger.warning("kde: dataset %s has no MIC entries", d)
            continue
        density = stats.kde(mics, grid)
        rows.extend(
            {"model_id": t.model_id, "dataset_id": d, "x": float(x), "density": float(y)}
            for x, y in zip(grid, density)
        )
    return rows


def count_modes(rows: Sequence[dict[str, Any]], dataset_id: str) -> int:
    density = np.array([r["density"] for r in rows if r["dataset_id"] == dataset_id])
    return len(stats.local_maxima(density))


def _stratum_rows(
    anns: Mapping[str, Sequence[SentenceAnnotation]], keep, stratum: str, threshold: int, model_id: str
) -> list[dict[str, Any]]:
    rows = []
    for d in sorted(anns):
        acc = dataset_accuracy(anns[d])
        table = build_mic_table([a for a in anns[d] if keep(a)], threshold, model_id=model_id, dataset_id=d)
        rows.extend(
            {"model_id": model_id, "dataset_id": d, "stratum": stratum, "marker": e.marker,
             "mic": e.mic, "support": e.support, "accuracy": acc}
            for e in (table.entries[m] for m in table.markers())
        )
    return rows


def _faithfulness_by_response(anns: Sequence[SentenceAnnotation]) -> dict[tuple, float | None]:
    groups: dict[tuple, list[SentenceAnnotation]] = {}
    for a in anns:
        groups.setdefault(a.response_key, []).append(a)
    out = {}
    for key, sents in groups.items():
        score = faithfulness(sents)
        out[key] = score.f if score else None
    return out


def figure_data(
    annotated: AnnotatedCorpus,
    tables: Mapping[str, MicTable],
    threshold: int,
    *,
    split: str = "train",
    faithful_threshold: float = FAITHFUL_THRESHOLD,
) -> FigureData:
    """Build every figure table for one model from the ``split`` annotations
    and that split's MIC ``tables``."""
    out = FigureData()
    model = annotated.model_id
    anns = annotated.split(split)
    out.tables["kde"] = (KDE_COLUMNS, kde_rows(tables))

    out.tables["mic_correct"] = (STRATUM_COLUMNS, _stratum_rows(anns, lambda a: a.correct is True, "correct", threshold, model))
    out.tables["mic_incorrect"] = (
        STRATUM_COLUMNS, _stratum_rows(anns, lambda a: a.correct is False, "incorrect", threshold, model)
    )

    has_dec = any(a.decisiveness is not None for group in anns.values() for a in group)
    if has_dec:
        f_of: dict[tuple, float | None] = {}
        for group in anns.values():
            f_of.update(_faithfulness_by_response(group))

        def faithful(a):
            f = f_of.get(a.response_key)
            return f is not None and f >= faithful_threshold

        def unfaithful(a):
            f = f_of.get(a.response_key)
            return f is not None and f < faithful_threshold

        out.tables["mic_faithful"] = (STRATUM_COLUMNS, _stratum_rows(anns, faithful, "faithful", threshold, model))
        out.tables["mic_unfaithful"] = (STRATUM_COLUMNS, _stratum_rows(anns, unfaithful, "unfaithful", threshold, model))

        mf_rows = []
        for d in sorted(tables):
            div = mf_divergence(anns.get(d, ()), tables[d].markers())
            mf_rows.extend(
                {"model_id": model, "dataset_id": d, "marker": m, "mic": tables[d].mic(m), "mf": v}
                for m, v in div.items()
            )
        out.tables["mf_scatter"] = (MF_COLUMNS, mf_rows)
    else:
        reason = "no decisiveness scores in annotations"
        for name in ("mic_faithful", "mic_unfaithful", "mf_scatter"):
            out.skipped[name] = reason

    out.tables["heatmap"] = (HEATMAP_COLUMNS, heatmap_rows(tables))
    return out


def heatmap_rows(tables: Mapping[str, MicTable]) -> list[dict[str, Any]]:
    markers = sorted({m for t in tables.values() for m in t.entries})
    rows = []
    for m in markers:
        for d in sorted(tables):
            e = tables[d].entries.get(m)
            if e is not None:
                rows.append({"model_id": tables[d].model_id, "marker": m, "dataset_id": d,
                             "mic": e.mic, "std": e.std, "support": e.support})
    return rows
