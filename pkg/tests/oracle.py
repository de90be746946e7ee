"""Brute-force reference implementation of every metric.

Written independently of the package: plain Python, plain dict records,
straight-line loops. Records look like::

    {"dataset": str, "split": "train"|"test", "qid": str, "idx": int,
     "marker": str | None,   # None = multi-marker sentence (discarded)
     "conf": float | None, "dec": float | None,
     "correct": bool | None, "punt": bool}

A value of None means "not computable" (the package reports such cells as
absent with a reason).
"""

from __future__ import annotations

import math

EPS = 1e-6
NO_HEDGE = "<no_hedge>"


def mean(xs):
    # Exactly rounded summation, so that MICs equal in exact arithmetic are
    # equal floats here too (ties matter for ranks and bin edges).
    return math.fsum(xs) / len(xs)


def pop_std(xs):
    m = mean(xs)
    return math.sqrt(sum((x - m) ** 2 for x in xs) / len(xs))


def cv(xs):
    m = mean(xs)
    if m == 0:
        return None
    return pop_std(xs) / m


def pearson(x, y):
    n = len(x)
    mx, my = sum(x) / n, sum(y) / n
    # A spread within rounding noise counts as no spread.
    if max(abs(v - mx) for v in x) <= 1e-12 * max(1.0, max(abs(v) for v in x)):
        return None
    if max(abs(v - my) for v in y) <= 1e-12 * max(1.0, max(abs(v) for v in y)):
        return None
    sxy = sum((x[i] - mx) * (y[i] - my) for i in range(n))
    sxx = sum((x[i] - mx) ** 2 for i in range(n))
    syy = sum((y[i] - my) ** 2 for i in range(n))
    return sxy / math.sqrt(sxx * syy)


def avg_ranks(xs):
    ranks = [0.0] * len(xs)
    for i, x in enumerate(xs):
        less = sum(1 for y in xs if y < x)
        equal = sum(1 for y in xs if y == x)
        ranks[i] = less + (equal + 1) / 2
    return ranks


def spearman(x, y):
    return pearson(avg_ranks(x), avg_ranks(y))


def fisher(rs):
    zs = []
    for r in rs:
        r = min(max(r, -1 + EPS), 1 - EPS)
        zs.append(0.5 * math.log((1 + r) / (1 - r)))
    return math.tanh(sum(zs) / len(zs))


def usable(s):
    return s["marker"] is not None and s["conf"] is not None


def mic_tables(records, T, drop_no_hedge=False):
    tables = {}
    for s in records:
        if s["split"] != "train":
            continue
        by_marker = tables.setdefault(s["dataset"], {})
        if usable(s):
            by_marker.setdefault(s["marker"], []).append(s["conf"])
    out = {}
    for d, by_marker in tables.items():
        out[d] = {}
        for m, confs in by_marker.items():
            if len(confs) >= T and not (drop_no_hedge and m == NO_HEDGE):
                out[d][m] = {"mic": mean(confs), "support": len(confs), "std": pop_std(confs)}
    return out


def test_sets(records, drop_no_hedge=False):
    out = {}
    for s in records:
        if s["split"] == "test" and usable(s) and not (drop_no_hedge and s["marker"] == NO_HEDGE):
            out.setdefault(s["dataset"], []).append(s)
    return out


def has_test(records):
    return {s["dataset"] for s in records if s["split"] == "test"}


def mae(table, sents, aggregation):
    errs = [(s, abs(table[s["marker"]]["mic"] - s["conf"])) for s in sents if s["marker"] in table]
    if not errs:
        return None
    if aggregation == "marker":
        per = {}
        for s, e in errs:
            per.setdefault(s["marker"], []).append(e)
        return mean([mean(v) for v in per.values()])
    if aggregation == "sentence":
        return mean([e for _, e in errs])
    per = {}
    for s, e in errs:
        per.setdefault(s["qid"], []).append(e)
    return mean([mean(v) for v in per.values()])


def imae(records, T, aggregation, drop_no_hedge=False):
    tables = mic_tables(records, T, drop_no_hedge)
    tests = test_sets(records, drop_no_hedge)
    vals = []
    for d in tables:
        if d not in has_test(records):
            continue
        v = mae(tables[d], tests.get(d, []), aggregation)
        if v is not None:
            vals.append(v)
    return mean(vals) if vals else None


def cmae(records, T, aggregation, drop_no_hedge=False, literal=False):
    tables = mic_tables(records, T, drop_no_hedge)
    tests = test_sets(records, drop_no_hedge)
    eligible = [d for d in tables if d in has_test(records)]
    if len(eligible) < 2:
        return None
    vals = []
    for d in eligible:
        for d2 in eligible:
            if d == d2:
                continue
            v = mae(tables[d], tests.get(d2, []), aggregation)
            if v is not None:
                vals.append(v)
    if not vals:
        return None
    if literal:
        n = len(eligible)
        return sum(vals) / (n * (n - 1) / 2)
    return mean(vals)


def mcv(tables):
    ds = list(tables)
    if len(ds) < 2:
        return None
    shared = [m for m in tables[ds[0]] if all(m in tables[d] for d in ds)]
    cvs = []
    for m in shared:
        c = cv([tables[d][m]["mic"] for d in ds])
        if c is not None:
            cvs.append(c)
    return mean(cvs) if cvs else None


def dcv(tables):
    cvs = []
    for d in tables:
        mics = [e["mic"] for e in tables[d].values()]
        if len(mics) < 2:
            continue
        c = cv(mics)
        if c is not None:
            cvs.append(c)
    return mean(cvs) if cvs else None


def mrc(tables):
    ds = sorted(tables)
    if len(ds) < 2:
        return None
    rs = []
    for i in range(len(ds)):
        for j in range(i + 1, len(ds)):
            common = [m for m in tables[ds[i]] if m in tables[ds[j]]]
            if len(common) < 3:
                continue
            r = spearman([tables[ds[i]][m]["mic"] for m in common], [tables[ds[j]][m]["mic"] for m in common])
            if r is not None:
                rs.append(r)
    return fisher(rs) if rs else None


def marker_target_corr(tables, target, kind):
    ds = [d for d in tables if target.get(d) is not None]
    if len(ds) < 3:
        return None
    shared = [m for m in tables[ds[0]] if all(m in tables[d] for d in ds)]
    rs = []
    for m in shared:
        x = [tables[d][m]["mic"] for d in ds]
        y = [target[d] for d in ds]
        r = pearson(x, y) if kind == "pearson" else spearman(x, y)
        if r is not None:
            rs.append(r)
    return fisher(rs) if rs else None


def responses(records, split):
    out = {}
    for s in records:
        if s["split"] == split:
            out.setdefault((s["dataset"], s["qid"]), []).append(s)
    return out


def faithfulness(sents):
    gaps = [abs(s["dec"] - s["conf"]) for s in sents
            if s["marker"] is not None and s["conf"] is not None and s["dec"] is not None]
    if not gaps:
        return None
    return 1 - mean(gaps)


def cmfg(resps):
    """``resps``: list of sentence lists, one per response."""
    bins = {}
    for sents in resps:
        if any(s["punt"] for s in sents):
            continue
        f = faithfulness(sents)
        confs = [s["conf"] for s in sents if usable(s)]
        if f is None or not confs:
            continue
        c = mean(confs)
        k = 0
        while k < 9 and c >= (k + 1) / 10:
            k += 1
        bins.setdefault(k, []).append(f)
    if not bins:
        return None
    return sum(sum(v) / len(v) for v in bins.values()) / len(bins)


def accuracy(resps):
    graded = []
    for sents in resps:
        c = sents[0]["correct"]
        if c is not None:
            graded.append(1.0 if c else 0.0)
    return sum(graded) / len(graded) if graded else None


def per_dataset(records, split, fn):
    by_d = {}
    for (d, _), sents in responses(records, split).items():
        by_d.setdefault(d, []).append(sents)
    return {d: fn(v) for d, v in by_d.items()}


def all_metrics(records, T, drop_no_hedge=False):
    tables = mic_tables(records, T, drop_no_hedge)
    acc = per_dataset(records, "train", accuracy)
    cm = per_dataset(records, "train", cmfg)
    out = {}
    for agg, suffix in (("marker", ""), ("sentence", "_sentence"), ("response", "_response")):
        out["imae" + suffix] = imae(records, T, agg, drop_no_hedge)
        out["cmae" + suffix] = cmae(records, T, agg, drop_no_hedge)
    out["mcv"] = mcv(tables)
    out["dcv"] = dcv(tables)
    out["mrc"] = mrc(tables)
    out["mac"] = marker_target_corr(tables, acc, "pearson")
    out["mac_spearman"] = marker_target_corr(tables, acc, "spearman")
    out["mcc"] = marker_target_corr(tables, cm, "pearson")
    out["mcc_spearman"] = marker_target_corr(tables, cm, "spearman")
    out["_cmfg"] = cm
    out["_accuracy"] = acc
    out["_tables"] = tables
    return out
