"""Stability and consistency metrics over MIC tables.

Conventions:

* MIC tables come from each dataset's train split and are scored against
  test-split annotations. Datasets without a test split take no part in the
  MAE family.
* Degenerate components (no overlapping markers, fewer than three shared
  markers, zero variance) are skipped and counted, never imputed.
* Datasets and markers are visited in lexicographic order, so every reduction
  is deterministic.
"""

from __future__ import annotations

import bisect
import itertools
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable, Mapping, Sequence

from . import stats
from .annotate import MULTI, NO_HEDGE, AnnotatedCorpus, SentenceAnnotation
from .errors import InsufficientDataError, UndefinedStatisticError
from .mic import DEFAULT_THRESHOLD, MicTable, build_mic_tables, exclude_no_hedge

AGGREGATIONS = ("marker", "sentence", "response")
CORRELATIONS = ("pearson", "spearman")
PAIR_NORMALIZATIONS = ("directed", "literal")
RESPONSE_REDUCTIONS = ("mean", "min", "last")
CMFG_BINS = 10
FAITHFUL_THRESHOLD = 0.75


@dataclass
class MetricValue:
    value: float | None
    pooled_std: float | None = None
    n: int = 0
    reason: str | None = None
    skipped: dict[str, int] = field(default_factory=dict)

    def to_json(self) -> dict[str, Any]:
        return asdict(self)


def _mean(xs: Sequence[float]) -> float:
    return math.fsum(xs) / len(xs)


def _sample_std(xs: Sequence[float]) -> float:
    if len(xs) < 2:
        return 0.0
    m = _mean(xs)
    return math.sqrt(math.fsum((x - m) ** 2 for x in xs) / (len(xs) - 1))


def _bump(counter: dict[str, int], key: str, by: int = 1) -> None:
    if by:
        counter[key] = counter.get(key, 0) + by


def _scoreable(anns: Iterable[SentenceAnnotation], drop_no_hedge: bool) -> list[SentenceAnnotation]:
    return [a for a in anns if a.usable and not (drop_no_hedge and a.marker == NO_HEDGE)]


@dataclass
class _MaeTerm:
    value: float
    groups: list[tuple[int, float]]


def _mae_term(
    table: MicTable, test: Sequence[SentenceAnnotation], aggregation: str, skipped: dict[str, int]
) -> _MaeTerm | None:
    """Mean absolute error between one train table and one test set, or None
    when no test sentence carries a marker of the table."""
    errors_by_marker: dict[str, list[float]] = {}
    errors_by_response: dict[tuple, list[float]] = {}
    flat: list[float] = []
    unseen = 0
    for a in test:
        entry = table.entries.get(a.marker)
        if entry is None:
            unseen += 1
            continue
        err = abs(entry.mic - a.confidence)
        errors_by_marker.setdefault(a.marker, []).append(err)
        errors_by_response.setdefault(a.response_key, []).append(err)
        flat.append(err)
    _bump(skipped, "sentences_marker_not_in_train", unseen)
    if not flat:
        return None
    if aggregation == "marker":
        per_marker = [errors_by_marker[m] for m in sorted(errors_by_marker)]
        return _MaeTerm(_mean([_mean(e) for e in per_marker]), [(len(e), _sample_std(e)) for e in per_marker])
    if aggregation == "sentence":
        return _MaeTerm(_mean(flat), [(len(flat), _sample_std(flat))])
    if aggregation == "response":
        per_response = [_mean(errors_by_response[k]) for k in sorted(errors_by_response)]
        return _MaeTerm(_mean(per_response), [(len(per_response), _sample_std(per_response))])
    raise ValueError(f"aggregation must be one of {AGGREGATIONS}")


def _pooled(groups: list[tuple[int, float]]) -> float | None:
    if not any(n >= 2 for n, _ in groups):
        return None
    return stats.pooled_std(g for g in groups if g[0] >= 2)


def imae(
    tables: Mapping[str, MicTable],
    test: Mapping[str, Sequence[SentenceAnnotation]],
    aggregation: str = "marker",
    *,
    drop_no_hedge: bool = False,
) -> MetricValue:
    """In-domain MAE: each dataset's train MICs against its own test split,
    averaged over datasets."""
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
    skipped: dict[str, int] = {}
    _bump(skipped, "datasets_without_test_split", sum(1 for d in tables if d not in test))
    eligible = sorted(d for d in tables if d in test)
    if not eligible:
        raise InsufficientDataError("iMAE needs at least one dataset with train and test splits")
    terms, groups = [], []
    for d in eligible:
        term = _mae_term(tables[d], _scoreable(test[d], drop_no_hedge), aggregation, skipped)
        if term is None:
            _bump(skipped, "datasets_without_overlap")
            continue
        terms.append(term.value)
        groups.extend(term.groups)
    if not terms:
        raise InsufficientDataError("iMAE: no dataset has test sentences with train markers")
    return MetricValue(_mean(terms), _pooled(groups), len(terms), skipped=skipped)


def cmae(
    tables: Mapping[str, MicTable],
    test: Mapping[str, Sequence[SentenceAnnotation]],
    aggregation: str = "marker",
    *,
    normalization: str = "directed",
    drop_no_hedge: bool = False,
) -> MetricValue:
    """Cross-domain MAE: dataset D's train MICs against every other dataset
    D''s test split.

    ``normalization="directed"`` averages over the evaluated ordered pairs;
    ``"literal"`` divides their sum by C(N_d, 2), which can exceed 1.
    """
    if aggregation not in AGGREGATIONS:
        raise ValueError(f"aggregation must be one of {AGGREGATIONS}")
    if normalization not in PAIR_NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {PAIR_NORMALIZATIONS}")
    skipped: dict[str, int] = {}
    _bump(skipped, "datasets_without_test_split", sum(1 for d in tables if d not in test))
    eligible = sorted(d for d in tables if d in test)
    if len(eligible) < 2:
        raise InsufficientDataError("cMAE needs at least two datasets with train and test splits")
    scoreable = {d: _scoreable(test[d], drop_no_hedge) for d in eligible}
    terms, groups = [], []
    for d, d2 in itertools.permutations(eligible, 2):
        term = _mae_term(tables[d], scoreable[d2], aggregation, skipped)
        if term is None:
            _bump(skipped, "pairs_without_overlap")
            continue
        terms.append(term.value)
        groups.extend(term.groups)
    if not terms:
        raise InsufficientDataError("cMAE: no dataset pair shares markers")
    if normalization == "directed":
        value = _mean(terms)
    else:
        n = len(eligible)
        value = math.fsum(terms) / (n * (n - 1) / 2)
    return MetricValue(value, _pooled(groups), len(terms), skipped=skipped)


def mcv(tables: Mapping[str, MicTable]) -> MetricValue:
    """Mean over markers shared by every dataset of the CV of their MICs."""
    ids = sorted(tables)
    if len(ids) < 2:
        raise InsufficientDataError("mCV needs at least two datasets")
    shared = set.intersection(*(set(tables[d].entries) for d in ids))
    if not shared:
        raise InsufficientDataError("mCV: no marker is shared by all datasets")
    skipped: dict[str, int] = {}
    cvs = []
    for m in sorted(shared):
        try:
            cvs.append(stats.cv([tables[d].mic(m) for d in ids]))
        except UndefinedStatisticError:
            _bump(skipped, "markers_zero_mean")
    if not cvs:
        raise InsufficientDataError("mCV: every shared marker has zero mean MIC")
    return MetricValue(_mean(cvs), n=len(cvs), skipped=skipped)


def dcv(tables: Mapping[str, MicTable]) -> MetricValue:
    """Mean over datasets of the CV of all MICs within the dataset."""
    skipped: dict[str, int] = {}
    cvs = []
    for d in sorted(tables):
        mics = [tables[d].mic(m) for m in tables[d].markers()]
        if len(mics) < 2:
            _bump(skipped, "datasets_fewer_than_2_markers")
            continue
        try:
            cvs.append(stats.cv(mics))
        except UndefinedStatisticError:
            _bump(skipped, "datasets_zero_mean")
    if not cvs:
        raise InsufficientDataError("dCV: no dataset has two or more markers")
    return MetricValue(_mean(cvs), n=len(cvs), skipped=skipped)


def mrc(tables: Mapping[str, MicTable], min_shared: int = 3) -> MetricValue:
    """Fisher mean over dataset pairs of the Spearman correlation of the MICs
    of the markers the two datasets share."""
    ids = sorted(tables)
    if len(ids) < 2:
        raise InsufficientDataError("MRC needs at least two datasets")
    skipped: dict[str, int] = {}
    rhos = []
    for d, d2 in itertools.combinations(ids, 2):
        common = sorted(set(tables[d].entries) & set(tables[d2].entries))
        if len(common) < min_shared:
            _bump(skipped, f"pairs_fewer_than_{min_shared}_shared")
            continue
        try:
            rhos.append(stats.spearman([tables[d].mic(m) for m in common], [tables[d2].mic(m) for m in common]))
        except UndefinedStatisticError:
            _bump(skipped, "pairs_all_tied")
    if not rhos:
        raise InsufficientDataError("MRC: no dataset pair has enough shared markers")
    return MetricValue(stats.fisher_mean(rhos), n=len(rhos), skipped=skipped)


def _correlate(kind: str, x: Sequence[float], y: Sequence[float]) -> float:
    if kind == "pearson":
        return stats.pearson(x, y)
    if kind == "spearman":
        return stats.spearman(x, y)
    raise ValueError(f"correlation must be one of {CORRELATIONS}")


def mic_correlation(
    tables: Mapping[str, MicTable],
    target: Mapping[str, float | None],
    correlation: str = "pearson",
    *,
    min_datasets: int | None = None,
    label: str = "MAC",
) -> MetricValue:
    """Fisher mean over markers of corr(marker MIC per dataset, per-dataset target).

    By default a marker must appear in every dataset. With ``min_datasets``
    a marker present in at least that many datasets is correlated over those
    datasets only.
    """
    if correlation not in CORRELATIONS:
        raise ValueError(f"correlation must be one of {CORRELATIONS}")
    skipped: dict[str, int] = {}
    ids = sorted(d for d in tables if target.get(d) is not None)
    _bump(skipped, "datasets_without_target", len(tables) - len(ids))
    if len(ids) < 3:
        raise InsufficientDataError(f"{label} needs at least three datasets with a target value")
    need = len(ids) if min_datasets is None else max(3, min_datasets)
    counts: dict[str, int] = {}
    for d in ids:
        for m in tables[d].entries:
            counts[m] = counts.get(m, 0) + 1
    markers = sorted(m for m, c in counts.items() if c >= need)
    if not markers:
        raise InsufficientDataError(f"{label}: no marker is shared across the datasets")
    rs = []
    for m in markers:
        present = [d for d in ids if m in tables[d].entries]
        try:
            rs.append(_correlate(correlation, [tables[d].mic(m) for d in present], [target[d] for d in present]))
        except UndefinedStatisticError:
            _bump(skipped, "markers_zero_variance")
    if not rs:
        raise InsufficientDataError(f"{label}: every shared marker has a zero-variance series")
    return MetricValue(stats.fisher_mean(rs), n=len(rs), skipped=skipped)


def mac(tables, accuracies, correlation="pearson", *, min_datasets=None) -> MetricValue:
    return mic_correlation(tables, accuracies, correlation, min_datasets=min_datasets, label="MAC")


def mcc(tables, cmfg_values, correlation="pearson", *, min_datasets=None) -> MetricValue:
    return mic_correlation(tables, cmfg_values, correlation, min_datasets=min_datasets, label="MCC")


@dataclass(frozen=True)
class FaithfulnessScore:
    response: tuple[str, str, str, str]
    f: float
    sentences: int
    excluded: int = 0


def faithfulness(sentences: Sequence[SentenceAnnotation]) -> FaithfulnessScore | None:
    """One minus the mean |decisiveness - confidence| over a response's
    sentences; None when no sentence has both values."""
    used = [a for a in sentences if a.marker_state != MULTI and a.confidence is not None and a.decisiveness is not None]
    if not used:
        return None
    gaps = [abs(a.decisiveness - a.confidence) for a in used]
    return FaithfulnessScore(used[0].response_key, 1.0 - _mean(gaps), len(used), len(sentences) - len(used))


@dataclass(frozen=True)
class ResponseScore:
    response: tuple[str, str, str, str]
    f: float | None
    confidence: float | None
    punt: bool = False


def _by_response(anns: Iterable[SentenceAnnotation]) -> dict[tuple, list[SentenceAnnotation]]:
    out: dict[tuple, list[SentenceAnnotation]] = {}
    for a in anns:
        out.setdefault(a.response_key, []).append(a)
    for v in out.values():
        v.sort(key=lambda a: a.sent_idx)
    return dict(sorted(out.items()))


def response_confidence(sentences: Sequence[SentenceAnnotation], reduction: str = "mean") -> float | None:
    confs = [a.confidence for a in sorted(sentences, key=lambda a: a.sent_idx) if a.usable]
    if not confs:
        return None
    if reduction == "mean":
        return _mean(confs)
    if reduction == "min":
        return min(confs)
    if reduction == "last":
        return confs[-1]
    raise ValueError(f"reduction must be one of {RESPONSE_REDUCTIONS}")


def response_scores(anns: Iterable[SentenceAnnotation], reduction: str = "mean") -> list[ResponseScore]:
    out = []
    for key, sents in _by_response(anns).items():
        fs = faithfulness(sents)
        out.append(ResponseScore(key, fs.f if fs else None, response_confidence(sents, reduction), any(a.punt for a in sents)))
    return out


def confidence_bin(c: float, bins: int = CMFG_BINS) -> int:
    """Bin k holds [k/bins, (k+1)/bins); the last bin is closed at 1.0."""
    edges = [k / bins for k in range(1, bins)]
    return bisect.bisect_right(edges, c)


def cmfg(scores: Iterable[ResponseScore], bins: int = CMFG_BINS) -> float:
    """Mean over occupied confidence bins of the bin's mean faithfulness.
    Punted responses and responses without F or confidence are left out."""
    binned: dict[int, list[float]] = {}
    usable = 0
    for s in scores:
        if s.punt or s.f is None or s.confidence is None:
            continue
        usable += 1
        binned.setdefault(confidence_bin(s.confidence, bins), []).append(s.f)
    if not usable:
        raise InsufficientDataError("CMFG: no non-punted response with faithfulness and confidence")
    return _mean([_mean(binned[b]) for b in sorted(binned)])


def dataset_accuracy(anns: Iterable[SentenceAnnotation]) -> float | None:
    graded = {a.response_key: a.correct for a in anns if a.correct is not None}
    if not graded:
        return None
    return sum(graded.values()) / len(graded)


def mf_divergence(anns: Iterable[SentenceAnnotation], markers: Iterable[str] | None = None) -> dict[str, float]:
    """Per-marker mean |decisiveness - confidence|."""
    keep = None if markers is None else set(markers)
    diffs: dict[str, list[float]] = {}
    for a in anns:
        if not a.usable or a.decisiveness is None:
            continue
        if keep is not None and a.marker not in keep:
            continue
        diffs.setdefault(a.marker, []).append(abs(a.decisiveness - a.confidence))
    return {m: _mean(diffs[m]) for m in sorted(diffs)}


METRIC_NAMES = (
    "imae", "imae_sentence", "imae_response",
    "cmae", "cmae_sentence", "cmae_response",
    "mcv", "dcv", "mrc",
    "mac", "mac_spearman", "mcc", "mcc_spearman",
)
TABLE_COLUMNS = ("imae", "cmae", "mcv", "dcv", "mrc", "mac", "mcc")


@dataclass
class MetricReport:
    model_id: str
    threshold: int
    no_hedge_excluded: bool
    metrics: dict[str, MetricValue]
    cmfg: dict[str, float | None]
    accuracy: dict[str, float | None]
    cmae_normalization: str = "directed"
    response_reduction: str = "mean"
    reference_split: str = "train"

    def value(self, name: str) -> float | None:
        return self.metrics[name].value

    def headline(self, aggregation: str = "marker") -> dict[str, float | None]:
        """Table-1 style row; ``aggregation`` picks the iMAE/cMAE variant."""
        suffix = "" if aggregation == "marker" else f"_{aggregation}"
        row = {c: self.value(c) for c in TABLE_COLUMNS}
        row["imae"] = self.value("imae" + suffix)
        row["cmae"] = self.value("cmae" + suffix)
        return row

    def to_json(self) -> dict[str, Any]:
        return {
            "model_id": self.model_id,
            "T": self.threshold,
            "no_hedge_excluded": self.no_hedge_excluded,
            "cmae_normalization": self.cmae_normalization,
            "response_reduction": self.response_reduction,
            "reference_split": self.reference_split,
            "metrics": {k: self.metrics[k].to_json() for k in METRIC_NAMES},
            "cmfg": self.cmfg,
            "accuracy": self.accuracy,
        }


def _safe(fn, *args, **kwargs) -> MetricValue:
    try:
        return fn(*args, **kwargs)
    except (InsufficientDataError, UndefinedStatisticError) as exc:
        return MetricValue(None, reason=str(exc))


def compute_report(
    annotated: AnnotatedCorpus,
    threshold: int = DEFAULT_THRESHOLD,
    *,
    exclude_no_hedge_marker: bool = False,
    cmae_normalization: str = "directed",
    response_reduction: str = "mean",
    reference_split: str = "train",
    min_datasets: int | None = None,
) -> MetricReport:
    """Every metric for one model. Cells that cannot be computed carry
    ``value=None`` and a reason instead of failing the whole report.

    Accuracy and CMFG per dataset (the MAC/MCC targets) are taken from
    ``reference_split``, the split the MIC tables are built from.
    """
    tables = build_mic_tables(annotated, threshold, split="train")
    if exclude_no_hedge_marker:
        tables = {d: exclude_no_hedge(t) for d, t in tables.items()}
    test = annotated.split("test")
    ref = annotated.split(reference_split)
    accuracy = {d: dataset_accuracy(anns) for d, anns in ref.items()}
    cmfg_values: dict[str, float | None] = {}
    for d, anns in ref.items():
        try:
            cmfg_values[d] = cmfg(response_scores(anns, response_reduction))
        except InsufficientDataError:
            cmfg_values[d] = None

    drop = exclude_no_hedge_marker
    m: dict[str, MetricValue] = {}
    for agg in AGGREGATIONS:
        suffix = "" if agg == "marker" else f"_{agg}"
        m["imae" + suffix] = _safe(imae, tables, test, agg, drop_no_hedge=drop)
        m["cmae" + suffix] = _safe(cmae, tables, test, agg, normalization=cmae_normalization, drop_no_hedge=drop)
    m["mcv"] = _safe(mcv, tables)
    m["dcv"] = _safe(dcv, tables)
    m["mrc"] = _safe(mrc, tables)
    m["mac"] = _safe(mac, tables, accuracy, "pearson", min_datasets=min_datasets)
    m["mac_spearman"] = _safe(mac, tables, accuracy, "spearman", min_datasets=min_datasets)
    m["mcc"] = _safe(mcc, tables, cmfg_values, "pearson", min_datasets=min_datasets)
    m["mcc_spearman"] = _safe(mcc, tables, cmfg_values, "spearman", min_datasets=min_datasets)
    return MetricReport(
        model_id=annotated.model_id,
        threshold=threshold,
        no_hedge_excluded=exclude_no_hedge_marker,
        metrics=m,
        cmfg=cmfg_values,
        accuracy=accuracy,
        cmae_normalization=cmae_normalization,
        response_reduction=response_reduction,
        reference_split=reference_split,
    )
