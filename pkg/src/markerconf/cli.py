"""Command-line pipeline: generate -> annotate -> mic -> metrics -> report.

Each stage reads the previous stage's files from ``--out`` (or the paths in
the config) and writes its own there. Every JSONL output starts with a
``{"kind": "meta", "config_hash": ..., "seed": ...}`` line, JSON documents
carry the same two keys, and CSV files carry them as trailing columns.
Outputs contain no timestamps, so identical inputs give identical bytes.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 backend error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

from .annotate import AnnotateOptions, annotate_corpus, group_by_model, load_annotations, save_annotations
from .config import BackendConfig, RunConfig, load_config
from .corpus import Corpus, cap_splits, load_corpus, save_corpus
from .errors import (
    AnnotationFailureError,
    BackendError,
    ConfigError,
    DataError,
    JudgeParseError,
    MarkerConfError,
)
from .generate import HTTPTaskModel, MockTaskModel, TaskModel, generate_responses
from .judge import HTTPBackend, Judge, JudgeCache, MockBackend
from .judge.types import Decode
from .metrics import AGGREGATIONS, TABLE_COLUMNS, compute_report
from .mic import build_mic_tables, exclude_no_hedge, write_mic_tables
from .report import figure_data

logger = logging.getLogger("markerconf")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_BACKEND = 0, 1, 2, 3

CORPUS_FILE = "corpus.jsonl"
MANIFEST_FILE = "generate_manifest.json"
ANNOTATIONS_FILE = "annotations.jsonl"
DIAGNOSTICS_FILE = "annotate_diagnostics.json"
CACHE_DIR = ".judge_cache"


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this CLI reserves 2 for data errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sweep(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"sweep must be comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run config")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--threshold", type=int, help="minimum marker support T")
    common.add_argument("--sweep", type=_sweep, help="comma-separated T values, ascending")
    common.add_argument("--exclude-no-hedge", action="store_true", default=None,
                        help="drop the <no_hedge> pseudo-marker and report the MRC change")
    common.add_argument("--aggregation", choices=AGGREGATIONS, help="iMAE/cMAE variant for the table export")
    common.add_argument("--parallelism", type=int)
    common.add_argument("--corpus", help="corpus file (overrides config)")
    common.add_argument("--annotations", help="annotation file (overrides config)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="markerconf", description="Marker internal confidence pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_ in (
        ("generate", "sample a primary response and K resamples per query"),
        ("annotate", "segment, extract markers and score every sentence"),
        ("mic", "build MIC tables from the train split"),
        ("metrics", "compute the stability metrics"),
        ("report", "write plot-ready figure tables"),
    ):
        sub.add_parser(name, parents=[common], help=help_)
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(args.config)
    return cfg.with_overrides(
        out=args.out,
        seed=args.seed,
        threshold=args.threshold,
        sweep=args.sweep,
        exclude_no_hedge=args.exclude_no_hedge,
        aggregation=args.aggregation,
        parallelism=args.parallelism,
        corpus=args.corpus,
        annotations=args.annotations,
    )


def _meta(cfg: RunConfig, stage: str, **extra: Any) -> dict[str, Any]:
    return {"kind": "meta", "stage": stage, **cfg.provenance(), **extra}


def _write_json(path: Path, obj: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _fmt(v: Any) -> Any:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else v


def _write_csv(path: Path, columns: Sequence[str], rows: Sequence[dict[str, Any]], prov: dict[str, Any]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = list(columns) + list(prov)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({c: _fmt({**r, **prov}.get(c)) for c in cols})


def _judge(cfg: RunConfig) -> Judge:
    jc = cfg.judge
    backend = _backend(jc)
    cache = JudgeCache(Path(cfg.cache_dir) if cfg.cache_dir else Path(cfg.out) / CACHE_DIR)
    return Judge(backend, cache, attempts=jc.attempts, backoff=jc.backoff)


def _backend(bc: BackendConfig):
    if bc.backend == "mock":
        return MockBackend(bc.model)
    return HTTPBackend(bc.base_url, bc.model, token_env=bc.token_env, timeout=bc.timeout)


def _task_model(cfg: RunConfig) -> TaskModel:
    tc = cfg.task_model
    if tc.backend == "mock":
        return MockTaskModel(tc.model, seed=cfg.seed)
    decode = Decode(tc.temperature if tc.temperature is not None else 1.0, tc.max_output_tokens or 256)
    return HTTPTaskModel(_backend(tc), decode, attempts=tc.attempts, backoff=tc.backoff)


def _corpus_path(cfg: RunConfig) -> Path:
    generated = Path(cfg.out) / CORPUS_FILE
    if generated.exists():
        return generated
    if cfg.corpus:
        return Path(cfg.corpus)
    raise ConfigError(f"no corpus: set 'corpus' in the config or run 'generate' into {cfg.out}")


def _annotations_path(cfg: RunConfig) -> Path:
    path = Path(cfg.annotations) if cfg.annotations else Path(cfg.out) / ANNOTATIONS_FILE
    if not path.exists():
        raise DataError(f"annotation file {path} not found; run 'annotate' first")
    return path


def cmd_generate(cfg: RunConfig) -> int:
    if not cfg.corpus:
        raise ConfigError("generate needs 'corpus' (the query file)")
    source = load_corpus(cfg.corpus)
    out = Path(cfg.out)
    existing = load_corpus(out / CORPUS_FILE).responses if (out / CORPUS_FILE).exists() else []
    queries = cap_splits(source.queries, cfg.max_examples, cfg.seed)
    model = _task_model(cfg)
    result = generate_responses(
        queries, model, cfg.k, system_prompt_id=cfg.system_prompt_id, seed=cfg.seed,
        existing=list(existing) + list(source.responses), parallelism=cfg.parallelism,
    )
    keep = {r.key for r in result.responses}
    kept_queries = {q.key for q in queries}
    others = [
        r for r in list(existing) + list(source.responses)
        if r.key not in keep and r.query_key in kept_queries and len(r.samples) == cfg.k
    ]
    others = list({r.key: r for r in others}.values())
    corpus = Corpus(queries, others + result.responses, meta={**cfg.provenance(), "stage": "generate"})
    save_corpus(corpus, out / CORPUS_FILE)
    _write_json(out / MANIFEST_FILE, {
        **cfg.provenance(),
        "model_id": model.model_id,
        "system_prompt_id": cfg.system_prompt_id,
        "k": cfg.k,
        "queries": len(queries),
        "responses": len(result.responses),
        "missing": result.missing,
    })
    if result.missing:
        logger.error("%d queries still missing; rerun to resume", len(result.missing))
        return EXIT_BACKEND
    return EXIT_OK


def cmd_annotate(cfg: RunConfig) -> int:
    corpus = load_corpus(_corpus_path(cfg), k=cfg.k)
    out = Path(cfg.out)
    judge = _judge(cfg)
    options = AnnotateOptions(
        score_decisiveness=cfg.score_decisiveness,
        score_accuracy=cfg.score_accuracy,
        failure_ceiling=cfg.failure_ceiling,
        parallelism=cfg.parallelism,
        detect_punts=cfg.detect_punts,
    )
    models = corpus.model_ids()
    if not models:
        logger.warning("corpus has no responses; writing an empty annotation file")
    annotations, diagnostics, status = [], {}, EXIT_OK
    for model_id in models:
        try:
            result = annotate_corpus(corpus, judge, options, model_id=model_id)
        except AnnotationFailureError as exc:
            result = exc.partial
            result.diagnostics["error"] = str(exc)
            status = EXIT_BACKEND
        annotations.extend(result.annotations)
        diagnostics[model_id] = result.diagnostics
    _write_json(out / DIAGNOSTICS_FILE, {**cfg.provenance(), "models": diagnostics})
    save_annotations(annotations, out / ANNOTATIONS_FILE, _meta(cfg, "annotate", k=cfg.k))
    if status != EXIT_OK:
        logger.error("annotation failure rate above ceiling; see %s", out / DIAGNOSTICS_FILE)
    return status


def _load_models(cfg: RunConfig):
    anns, _ = load_annotations(_annotations_path(cfg))
    models = group_by_model(anns, cfg.k)
    if not models:
        raise DataError("annotation file holds no annotations")
    return models


def cmd_mic(cfg: RunConfig) -> int:
    models = _load_models(cfg)
    out = Path(cfg.out)
    for t in cfg.thresholds:
        tables = []
        for annotated in models.values():
            built = build_mic_tables(annotated, t, split="train")
            if cfg.exclude_no_hedge:
                built = {d: exclude_no_hedge(tb) for d, tb in built.items()}
            tables.extend(built[d] for d in sorted(built))
        write_mic_tables(tables, out / f"mic_T{t}.jsonl", out / f"mic_T{t}.csv", extra=cfg.provenance(),
                         meta=_meta(cfg, "mic", T=t))
    return EXIT_OK


def _report(cfg: RunConfig, annotated, t: int, exclude: bool):
    return compute_report(
        annotated, t,
        exclude_no_hedge_marker=exclude,
        cmae_normalization=cfg.cmae_normalization,
        response_reduction=cfg.response_reduction,
        reference_split=cfg.reference_split,
        min_datasets=cfg.min_shared_datasets,
    )


def cmd_metrics(cfg: RunConfig) -> int:
    models = _load_models(cfg)
    out = Path(cfg.out)
    prov = cfg.provenance()
    columns = ["model_id", "T", "aggregation", "no_hedge_excluded", *TABLE_COLUMNS]
    if cfg.exclude_no_hedge:
        columns.append("delta_mrc")
    for t in cfg.thresholds:
        docs, rows = [], []
        for model_id, annotated in models.items():
            report = _report(cfg, annotated, t, cfg.exclude_no_hedge)
            doc = report.to_json()
            row = {"model_id": model_id, "T": t, "aggregation": cfg.aggregation,
                   "no_hedge_excluded": cfg.exclude_no_hedge, **report.headline(cfg.aggregation)}
            if cfg.exclude_no_hedge:
                full = _report(cfg, annotated, t, False)
                delta = None
                if report.value("mrc") is not None and full.value("mrc") is not None:
                    delta = report.value("mrc") - full.value("mrc")
                row["delta_mrc"] = delta
                doc["mrc_with_no_hedge"] = full.metrics["mrc"].to_json()
                doc["delta_mrc"] = delta
            docs.append(doc)
            rows.append(row)
        _write_json(out / f"metrics_T{t}.json", {**prov, "aggregation": cfg.aggregation, "reports": docs})
        _write_csv(out / f"table_T{t}.csv", columns, rows, prov)
    return EXIT_OK


def cmd_report(cfg: RunConfig) -> int:
    models = _load_models(cfg)
    out = Path(cfg.out) / "figures"
    prov = cfg.provenance()
    t = cfg.thresholds[0]
    merged: dict[str, tuple[tuple[str, ...], list[dict[str, Any]]]] = {}
    skipped: dict[str, dict[str, str]] = {}
    for model_id, annotated in models.items():
        tables = build_mic_tables(annotated, t, split="train")
        if cfg.exclude_no_hedge:
            tables = {d: exclude_no_hedge(tb) for d, tb in tables.items()}
        fig = figure_data(annotated, tables, t)
        for name, (cols, rows) in fig.tables.items():
            merged.setdefault(name, (cols, []))[1].extend(rows)
        if fig.skipped:
            skipped[model_id] = fig.skipped
    for name, (cols, rows) in sorted(merged.items()):
        _write_csv(out / f"{name}.csv", cols, rows, prov)
    _write_json(out / "skipped.json", {**prov, "T": t, "skipped": skipped})
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "annotate": cmd_annotate,
    "mic": cmd_mic,
    "metrics": cmd_metrics,
    "report": cmd_report,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (BackendError, JudgeParseError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except MarkerConfError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
