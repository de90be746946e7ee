"""Acceptance suite: one PASS/FAIL line per primary criterion.

Run on its own with ``pytest tests/test_acceptance.py -s`` (or ``-v``); the
lines are printed even when pytest captures output. Each test gathers every
failing sub-check before asserting, so a FAIL line lists all of them.
"""

from __future__ import annotations

import math
import os
import random
import re
import tempfile
import time
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import compare
import oracle
import synth
from markerconf import stats
from markerconf.annotate import NO_HEDGE, annotate_corpus, hedges_per_sentence, intrinsic_confidence, load_annotations
from markerconf.cli import ANNOTATIONS_FILE
from markerconf.corpus import load_corpus, save_corpus
from markerconf.errors import InsufficientDataError
from markerconf.judge import Judge, MockBackend
from markerconf.metrics import (
    ResponseScore,
    cmae,
    cmfg,
    compute_report,
    dcv,
    faithfulness,
    imae,
    mac,
    mcv,
    mf_divergence,
    mrc,
)
from markerconf.mic import MicEntry, MicTable, build_mic_table, build_mic_tables, exclude_no_hedge
from markerconf.report import count_modes, kde_rows
from pipeline import anchor_records, run_stages, snapshot, write_config, write_queries
from test_annotate import one_response_corpus, verdict_judge
from test_corpus import corpora

PROPERTY = settings(max_examples=500, deadline=None)
S = synth.sentence
TESTS = Path(__file__).parent


def emit(capsys, name: str, failures: list[str], note: str = "") -> None:
    status = "PASS" if not failures else "FAIL"
    detail = "; ".join(failures[:5]) if failures else note
    with capsys.disabled():
        print(f"\n{status} {name}" + (f" ({detail})" if detail else ""))
    assert not failures, failures


def check(failures: list[str], label: str, ok: bool) -> None:
    if not ok:
        failures.append(label)


def tables_of(**mics):
    return {
        d: MicTable("m", d, "train", 1, {m: MicEntry(m, v, 10, 0.0) for m, v in entries.items()})
        for d, entries in mics.items()
    }


def anns_of(records):
    return synth.to_corpus(records).annotations


def resp(qid, pairs):
    return [S("d", "train", qid, i, "E", c, d) for i, (d, c) in enumerate(pairs)]


def one_marker(dataset, marker, train, test, prefix=""):
    recs = [S(dataset, "train", f"{prefix}t{i}", 0, marker, c) for i, c in enumerate(train)]
    return recs + [S(dataset, "test", f"{prefix}s{i}", 0, marker, c) for i, c in enumerate(test)]


def split_inputs(records):
    corpus = synth.to_corpus(records)
    return build_mic_tables(corpus, 1), corpus.split("test")


def test_oracle_equivalence(capsys):
    failures: list[str] = []
    seeds = range(200)
    start = time.perf_counter()
    for seed in seeds:
        failures.extend(compare.compare_fixture(seed))
        rng = random.Random(seed)
        records = synth.random_records(rng)
        threshold = rng.choice([1, 2, 3, 5, 10])
        corpus = synth.to_corpus(records)
        # MIC entries and per-response faithfulness against the straight-line oracle.
        tables = build_mic_tables(corpus, threshold)
        expected = oracle.mic_tables(records, threshold)
        for d, by_marker in expected.items():
            got = tables[d].entries
            check(failures, f"seed {seed} MIC keys {d}", sorted(got) == sorted(by_marker))
            for m, e in by_marker.items():
                if m in got:
                    check(failures, f"seed {seed} MIC {d}/{m}", abs(got[m].mic - e["mic"]) <= 1e-9)
        for (d, qid), sents in oracle.responses(records, "train").items():
            score = faithfulness([a for a in corpus.annotations if a.dataset_id == d and a.split == "train" and a.query_id == qid])
            want = oracle.faithfulness(sents)
            got = None if score is None else score.f
            check(failures, f"seed {seed} F {d}/{qid}", compare.close(got, want))
    elapsed = time.perf_counter() - start
    counts = compare.non_null_counts(seeds)
    for name, n in counts.items():
        check(failures, f"metric {name} never evaluated", n > 0)
    check(failures, f"runtime {elapsed:.1f}s >= 60s", elapsed < 60)
    emit(capsys, "oracle equivalence: 200 fixtures, all metrics + MIC + F at 1e-9", failures, f"{elapsed:.1f}s")


def test_closed_forms(capsys):
    failures: list[str] = []
    samples = [f"s{i}" for i in range(20)]
    judge = verdict_judge(dict(zip(samples, ["Yes"] * 10 + ["N/A"] * 5 + ["No"] * 5)))
    check(failures, "conf 10/5/5 K=20", intrinsic_confidence("x", samples, judge) == 0.625)
    check(failures, "hedges [0,2]", hedges_per_sentence([0, 2]) == (1.0, 1.0))
    check(failures, "cv [1,2,3]", abs(stats.cv([1, 2, 3]) - 0.408248) <= 1e-6)
    check(failures, "cv [0.5,0.5,0.5,0.7]", abs(stats.cv([0.5, 0.5, 0.5, 0.7]) - oracle.cv([0.5, 0.5, 0.5, 0.7])) <= 1e-12)
    check(failures, "pearson", abs(stats.pearson([1, 2, 3, 4], [1, 3, 2, 5]) - oracle.pearson([1, 2, 3, 4], [1, 3, 2, 5])) <= 1e-12)
    check(failures, "spearman ties",
          abs(stats.spearman([1, 2, 2, 4], [10, 20, 30, 40]) - oracle.spearman([1, 2, 2, 4], [10, 20, 30, 40])) <= 1e-12)
    # Independent transcription of the Fisher mean.
    fisher_hand = math.tanh((math.atanh(0.8) + math.atanh(0.2)) / 2)
    check(failures, "fisher [0.8,0.2]", abs(stats.fisher_mean([0.8, 0.2]) - fisher_hand) <= 1e-12)
    check(failures, "fisher 5 places", abs(stats.fisher_mean([0.8, 0.2]) - 0.57212) <= 1e-5)
    check(failures, "pooled std", abs(stats.pooled_std([(5, 0.1), (10, 0.2)]) - 0.17541) <= 1e-5)

    anns = [synth.to_annotation(S("d", "train", f"q{i}", 0, "E", c)) for i, c in enumerate([0.5, 0.7, 0.9])]
    e = build_mic_table(anns, 1).entries["E"]
    check(failures, "mic [0.5,0.7,0.9]", abs(e.mic - 0.7) <= 1e-12 and e.support == 3)
    t = MicTable("m", "d", "train", 1, {NO_HEDGE: MicEntry(NO_HEDGE, 0.9, 1, 0), "likely": MicEntry("likely", 0.6, 1, 0)})
    check(failures, "exclude no_hedge", {m: x.mic for m, x in exclude_no_hedge(t).entries.items()} == {"likely": 0.6})

    tables, test = split_inputs(one_marker("d", "E", [0.7], [0.6, 0.8]))
    check(failures, "imae 0.1", abs(imae(tables, test).value - 0.1) <= 1e-12)
    recs = one_marker("d", "A", [0.5], [0.6], "a") + one_marker("d", "B", [0.5], [0.8, 0.2, 0.8], "b")
    tables, test = split_inputs(recs)
    check(failures, "imae marker 0.2", abs(imae(tables, test, "marker").value - 0.2) <= 1e-12)
    check(failures, "imae sentence 0.25", abs(imae(tables, test, "sentence").value - 0.25) <= 1e-12)

    check(failures, "mcv 0.2", abs(mcv(tables_of(a={"E": 0.4}, b={"E": 0.6})).value - 0.2) <= 1e-12)
    check(failures, "dcv 0.408248", abs(dcv(tables_of(a={"E": 0.2, "F": 0.4, "G": 0.6})).value - 0.408248) <= 1e-6)
    base = {"m1": 0.1, "m2": 0.2, "m3": 0.3, "m4": 0.4, "m5": 0.5}
    third = {"m1": 0.1, "m2": 0.4, "m3": 0.2, "m4": 0.5, "m5": 0.3}
    # Pairwise Spearmans 1.0, 0.5, 0.5; 1.0 is clipped by the Fisher epsilon.
    want = math.tanh((math.atanh(1 - 1e-6) + 2 * math.atanh(0.5)) / 3)
    check(failures, "mrc three pairs", abs(mrc(tables_of(a=base, b=dict(base), c=third)).value - want) <= 1e-12)
    check(failures, "F 0.8", abs(faithfulness(anns_of(resp("q", [(0.5, 0.4), (0.2, 0.5)]))).f - 0.8) <= 1e-12)
    scores = [ResponseScore(("m", "d", "train", "q1"), 0.3, 0.21), ResponseScore(("m", "d", "train", "q2"), 0.5, 0.25),
              ResponseScore(("m", "d", "train", "q3"), 0.8, 0.91)]
    check(failures, "cmfg 0.6", abs(cmfg(scores) - 0.6) <= 1e-12)
    check(failures, "mf 0.3", abs(mf_divergence(anns_of(resp("q", [(0.5, 0.3), (0.1, 0.5)])))["E"] - 0.3) <= 1e-12)

    out = annotate_corpus(one_response_corpus("Perhaps X. Y is Z.", ["X. Y is Z.", "W. Y is Z.", "X."]), Judge(MockBackend()))
    states = [(a.marker_state, a.marker) for a in out.annotations]
    check(failures, "Perhaps X. Y is Z.", states == [("single", "perhaps"), ("no_hedge", NO_HEDGE)])
    emit(capsys, "closed-form fixtures", failures)


def test_boundaries(capsys):
    failures: list[str] = []
    for count, present in ((9, False), (10, True), (11, True)):
        anns = [synth.to_annotation(S("d", "train", f"q{i}", 0, "E", 0.5)) for i in range(count)]
        check(failures, f"T=10 support {count}", ("E" in build_mic_table(anns, 10)) is present)

    three = {"A": 0.1, "B": 0.2, "C": 0.3}
    out = mrc(tables_of(a=three, b={"A": 0.4, "B": 0.5, "C": 0.9}, c={"A": 0.2, "B": 0.1}))
    check(failures, "mrc 3 shared kept, 2 shared skipped", out.n == 1 and out.skipped == {"pairs_fewer_than_3_shared": 2})
    try:
        mrc(tables_of(a={"A": 0.1, "B": 0.2}, b={"A": 0.1, "B": 0.2}))
        failures.append("mrc with only 2 shared markers did not raise")
    except InsufficientDataError:
        pass

    t = tables_of(a={"E": 0.5, "F": 0.1}, b={"E": 0.5, "F": 0.2}, c={"E": 0.5, "F": 0.4})
    out = mac(t, {"a": 0.1, "b": 0.2, "c": 0.3})
    check(failures, "mac zero-variance marker skipped", out.skipped == {"markers_zero_variance": 1} and out.n == 1)

    scores = [ResponseScore(("m", "d", "train", f"q{i}"), 0.7, c) for i, c in enumerate([0.05, 0.95])]
    check(failures, "cmfg empty bins excluded", abs(cmfg(scores) - 0.7) <= 1e-12)
    try:
        cmfg([ResponseScore(("m", "d", "train", "q1"), 0.3, 0.2, punt=True)])
        failures.append("all-punt cmfg did not raise")
    except InsufficientDataError:
        pass
    emit(capsys, "boundary and degeneracy suite", failures)


def test_structural_reproductions(capsys):
    failures: list[str] = []
    # (a) Each dataset transfers perfectly to its own test split, but MICs sit at different levels.
    recs = []
    for d, level in (("a", 0.2), ("b", 0.5), ("c", 0.8)):
        for m, off in (("maybe", 0.0), ("likely", 0.1)):
            recs += one_marker(d, m, [level + off] * 3, [level + off] * 3, m)
    tables, test = split_inputs(recs)
    gap = cmae(tables, test).value - imae(tables, test).value
    check(failures, f"(a) cMAE - iMAE = {gap:.3f}", gap > 0)

    # (b) <no_hedge> at the top of two otherwise reversed rankings.
    corpus = synth.to_corpus(anchor_records())
    full = compute_report(corpus, 10, min_datasets=2).value("mrc")
    ablated = compute_report(corpus, 10, exclude_no_hedge_marker=True, min_datasets=2).value("mrc")
    delta = ablated - full
    check(failures, f"(b) delta MRC = {delta:.3f}", delta < 0)

    # (c) Two well-separated MIC clusters.
    mics = [0.15, 0.18, 0.2, 0.22, 0.25, 0.75, 0.78, 0.8, 0.82, 0.85]
    table = MicTable("m", "d", "train", 1, {f"mk{i}": MicEntry(f"mk{i}", v, 10, 0.0) for i, v in enumerate(mics)})
    modes = count_modes(kde_rows({"d": table}), "d")
    check(failures, f"(c) KDE maxima = {modes}", modes == 2)
    emit(capsys, "structural reproductions: cMAE > iMAE, delta MRC < 0, bimodal KDE", failures,
          f"gap {gap:.3f}, delta {delta:.3f}, modes {modes}")


def test_end_to_end_determinism(capsys, tmp_path):
    failures: list[str] = []
    snaps, elapsed, sentences = [], [], 0
    for run in ("a", "b"):
        folder = tmp_path / run
        folder.mkdir()
        write_queries(folder / "queries.jsonl", n=84)
        cfg = write_config(folder, k=5, seed=7)
        start = time.perf_counter()
        codes = run_stages(cfg)
        elapsed.append(time.perf_counter() - start)
        check(failures, f"run {run} exit codes {codes}", codes == [0] * 5)
        snaps.append(snapshot(folder / "out"))
        anns, _ = load_annotations(folder / "out" / ANNOTATIONS_FILE)
        sentences = len(anns)
    check(failures, f"{sentences} sentences < 1000", sentences >= 1000)
    check(failures, f"slowest run {max(elapsed):.1f}s >= 60s", max(elapsed) < 60)
    check(failures, "outputs differ between runs", snaps[0] == snaps[1])
    check(failures, "no outputs", len(snaps[0]) > 5)
    emit(capsys, "end-to-end determinism: mock judge, K=5", failures,
          f"{sentences} sentences, {len(snaps[0])} files, {max(elapsed):.1f}s per run")


def test_round_trip_and_invariants(capsys):
    failures: list[str] = []
    tmp = Path(tempfile.mkdtemp())

    @PROPERTY
    @given(corpora())
    def corpus_round_trip(corpus):
        p = tmp / "c.jsonl"
        save_corpus(corpus, p)
        loaded = load_corpus(p)
        assert loaded == corpus
        first = p.read_bytes()
        save_corpus(loaded, p)
        assert p.read_bytes() == first

    @PROPERTY
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=40))
    def mic_mean(confs):
        anns = [synth.to_annotation(S("d", "train", f"q{i}", 0, "E", c)) for i, c in enumerate(confs)]
        assert abs(build_mic_table(anns, 1).mic("E") - math.fsum(confs) / len(confs)) <= 1e-12

    @PROPERTY
    @given(st.lists(st.tuples(st.integers(0, 100), st.integers(0, 100)), min_size=3, max_size=30))
    def spearman_monotone(pairs):
        x = [a / 100 for a, _ in pairs]
        y = [b / 100 for _, b in pairs]
        if len(set(x)) < 2 or len(set(y)) < 2:
            return
        assert abs(stats.spearman(x, y) - stats.spearman([math.exp(3 * v) for v in x], [v**3 + v for v in y])) <= 1e-9

    @PROPERTY
    @given(st.lists(st.floats(0.01, 10), min_size=2, max_size=30), st.floats(0.01, 100))
    def cv_scale(xs, c):
        assert abs(stats.cv(xs) - stats.cv([c * v for v in xs])) <= 1e-9

    for prop in (corpus_round_trip, mic_mean, spearman_monotone, cv_scale):
        try:
            prop()
        except Exception as exc:  # noqa: BLE001 - reported as a FAIL line
            failures.append(f"{prop.__name__}: {exc!r}"[:200])

    # Every property test in the suite must draw at least 500 cases.
    for path in TESTS.glob("test_*.py"):
        for n in re.findall(r"max_examples=(\d+)", path.read_text()):
            check(failures, f"{path.name} max_examples={n}", int(n) >= 500)
    emit(capsys, "round-trip and invariant properties (500 cases each)", failures)


LIVE_ENV = ("MARKERCONF_LIVE_BASE_URL", "MARKERCONF_LIVE_JUDGE_MODEL", "MARKERCONF_LIVE_TASK_MODEL", "MARKERCONF_LIVE_QUERIES")


def test_optional_live_mode(capsys, tmp_path):
    if not all(os.environ.get(v) for v in LIVE_ENV):
        with capsys.disabled():
            print(f"\nSKIP optional live mode (set {', '.join(LIVE_ENV)} and MARKERCONF_API_TOKEN)")
        pytest.skip("live mode needs credentials")
    import json
    import shutil

    failures: list[str] = []
    shutil.copy(os.environ["MARKERCONF_LIVE_QUERIES"], tmp_path / "queries.jsonl")
    base = os.environ["MARKERCONF_LIVE_BASE_URL"]
    cfg = write_config(
        tmp_path, k=int(os.environ.get("MARKERCONF_LIVE_K", "5")),
        judge={"backend": "http", "base_url": base, "model": os.environ["MARKERCONF_LIVE_JUDGE_MODEL"]},
        task_model={"backend": "http", "base_url": base, "model": os.environ["MARKERCONF_LIVE_TASK_MODEL"]},
    )
    codes = run_stages(cfg, stages=("generate", "annotate", "metrics"))
    check(failures, f"exit codes {codes}", codes == [0, 0, 0])
    if not failures:
        doc = json.loads((tmp_path / "out" / "metrics_T10.json").read_text())
        for report in doc["reports"]:
            i, c = report["metrics"]["imae"]["value"], report["metrics"]["cmae"]["value"]
            check(failures, f"{report['model_id']}: iMAE {i} !< cMAE {c}", i is not None and c is not None and i < c)
    emit(capsys, "optional live mode: iMAE < cMAE", failures)

