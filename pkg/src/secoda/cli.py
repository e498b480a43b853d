"""Command-line front end: ``secoda {detect,generate,evaluate,bench}``.

Exit codes: 0 success, 2 usage or validation error, 3 no convergence.
Every run writes ``<primary output>.run.json`` holding the resolved options.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data_model import (
    DEFAULT_MISSING_TOKENS,
    CSVFormatError,
    LabeledDataset,
    Schema,
    SchemaError,
    format_number,
    load_csv,
    read_labels,
    read_scores,
    write_csv,
    write_labels,
    write_scores,
)
from .detector import ConvergenceError, DetectionConfig, detect
from .metrics import (
    MetricsError,
    ScoredLabels,
    best_threshold,
    bootstrap_ci,
    partial_auc_statistic,
    pr_auc,
    roc_auc,
    roc_band,
)
from .synth import TABLE_SIZES, GeneratorSpec, generate

EXIT_OK, EXIT_USAGE, EXIT_NO_CONVERGENCE = 0, 2, 3
VARIANTS = ("final", "pruneless", "stepless", "unweighted")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    options: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps({"command": self.command, "options": self.options}, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> RunConfig:
        obj = json.loads(text)
        return cls(obj["command"], obj["options"])

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        opts = {}
        for k, v in sorted(vars(args).items()):
            if k in ("command", "func"):
                continue
            opts[k] = str(v) if isinstance(v, Path) else v
        return cls(args.command, opts)


def _write_manifest(primary: str | Path, config: RunConfig, extra: dict | None = None) -> Path:
    path = Path(f"{primary}.run.json")
    body = {"version": __version__, "run": json.loads(config.to_json())}
    if extra:
        body.update(extra)
    path.write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _detection_config(args) -> DetectionConfig:
    return DetectionConfig(
        anomaly_fraction=args.fraction,
        prune_quantile=args.prune_quantile,
        pruning_enabled=not args.no_prune,
        accelerated_stepping=not args.no_step,
        weighted_scores=not args.unweighted,
        range_policy=args.range,
        max_iterations=args.max_iter,
    )


# ---------------------------------------------------------------- detect


def cmd_detect(args) -> int:
    tokens = args.missing_token if args.missing_token is not None else sorted(DEFAULT_MISSING_TOKENS)
    args.missing_token = tokens
    config = RunConfig.from_args(args)
    try:
        schema = Schema.load(args.schema) if args.schema else None
        data = load_csv(args.input, schema, tokens)
        det_config = _detection_config(args)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if data.n == 0:
        raise UsageError("input has no data rows")

    try:
        result = detect(data, det_config, workers=args.workers)
    except ConvergenceError as exc:
        if args.trace:
            with open(args.trace, "w", encoding="utf-8") as fh:
                for rec in exc.trace:
                    fh.write(rec.to_json() + "\n")
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE

    write_scores(result, args.output)
    if args.trace:
        with open(args.trace, "w", encoding="utf-8") as fh:
            result.write_trace(fh)
    _write_manifest(
        args.output,
        config,
        {"iterations_run": result.iterations_run, "n": data.n, "detection": det_config.to_dict()},
    )
    print(f"# {data.n} cases, {result.iterations_run} iterations")
    print("rank,case_id,aas")
    for g, aas, rank in result.top(args.top):
        print(f"{rank},{g},{format_number(aas)}")
    return EXIT_OK


# -------------------------------------------------------------- generate


def cmd_generate(args) -> int:
    spec = GeneratorSpec(args.kind, args.n, args.seed)
    args.n = spec.n
    config = RunConfig.from_args(args)
    labeled = generate(spec)
    write_csv(labeled.data, args.out)
    write_labels(labeled, args.labels_out)
    if args.schema_out:
        labeled.data.schema.save(args.schema_out)
    counts = {lab: labeled.labels.count(lab) for lab in sorted(set(labeled.labels))}
    _write_manifest(args.out, config, {"label_counts": counts})
    print(f"wrote {spec.n} cases to {args.out} ({counts})")
    return EXIT_OK


# -------------------------------------------------------------- evaluate


def _paired(scores: dict[int, float], labels: dict[int, str]) -> ScoredLabels:
    if set(scores) != set(labels):
        missing = sorted(set(scores) ^ set(labels))[:5]
        raise UsageError(f"score and label case ids differ (e.g. {missing})")
    ids = sorted(scores)
    return ScoredLabels(
        np.array([scores[g] for g in ids]), np.array([labels[g] != "normal" for g in ids])
    )


def evaluation_report(
    sl: ScoredLabels, resamples: int = 10000, partial: float = 0.9, seed: int = 0, workers: int = 1
) -> dict:
    """ROC/PR AUCs and partial AUCs with bootstrap CIs, plus optimal-threshold panels."""
    rng = (partial, 1.0)
    curve, _ = roc_auc(sl)
    _, ap = pr_auc(sl)

    def ci(stat):
        return bootstrap_ci(sl, stat, resamples, seed, workers=workers).to_dict()

    report = {
        "n": int(len(sl.scores)),
        "anomalies": sl.positives,
        "roc_auc": ci("roc_auc"),
        "pauc_specificity": {
            **ci(partial_auc_statistic(rng, "specificity")),
            "range": list(rng),
            "standardized": True,
        },
        "pauc_sensitivity": {
            **ci(partial_auc_statistic(rng, "sensitivity")),
            "range": list(rng),
            "standardized": True,
        },
        "pr_auc": {**ci("pr_auc"), "interpolation": "step"},
        "thresholds": {},
    }
    for crit in ("youden", "mcc"):
        thr, metrics = best_threshold(sl, crit)
        report["thresholds"][crit] = {"threshold": thr, "metrics": metrics}
    report["roc_points"] = len(curve.fpr)
    report["pr_auc"]["point"] = ap
    return report


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format_number(v) for v in r])


def cmd_evaluate(args) -> int:
    config = RunConfig.from_args(args)
    if args.bootstrap < 100:
        raise UsageError(f"--bootstrap must be at least 100, got {args.bootstrap}")
    if not 0 <= args.partial_spec < 1:
        raise UsageError("--partial-spec must lie in [0, 1)")
    try:
        sl = _paired(read_scores(args.scores), read_labels(args.labels))
        sl.require_both()
        report = evaluation_report(sl, args.bootstrap, args.partial_spec, args.seed, args.workers)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    Path(args.metrics_out).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    if args.roc_out:
        curve, _ = roc_auc(sl)
        _write_rows(args.roc_out, ["fpr", "tpr"], curve.rows())
    if args.pr_out:
        curve, _ = pr_auc(sl)
        _write_rows(args.pr_out, ["recall", "precision"], curve.rows())
    if args.band_out:
        band = roc_band(sl, args.bootstrap, np.linspace(0, 1, 101), args.seed, workers=args.workers)
        _write_rows(args.band_out, ["fpr", "tpr", "lo", "hi"], band.rows())
    _write_manifest(args.metrics_out, config)
    r = report
    print(f"ROC AUC {r['roc_auc']['point']:.6f} [{r['roc_auc']['lo']:.6f}, {r['roc_auc']['hi']:.6f}]")
    print(f"PR AUC  {r['pr_auc']['point']:.6f} [{r['pr_auc']['lo']:.6f}, {r['pr_auc']['hi']:.6f}]")
    return EXIT_OK


# ----------------------------------------------------------------- bench


def linear_fit(x, y) -> tuple[float, float, float]:
    """Least-squares ``y = a + b x``; returns ``(a, b, r_squared)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    b, a = np.polyfit(x, y, 1)
    ss_res = float(np.sum((y - (a + b * x)) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1 - ss_res / ss_tot
    return float(a), float(b), r2


def run_bench(
    labeled: LabeledDataset | None,
    data,
    variants,
    fractions: int = 5,
    repeats: int = 1,
    seed: int = 0,
) -> tuple[list[dict], dict]:
    """Time each variant on nested random subsets of 1/F .. F/F of the cases."""
    n = data.n
    order = np.random.default_rng(seed).permutation(n)
    sizes = [round(n * k / fractions) for k in range(1, fractions + 1)]
    subsets = [data.take(np.sort(order[:m])) for m in sizes]
    labels = None if labeled is None else labeled.is_anomaly
    sub_labels = [None if labels is None else labels[np.sort(order[:m])] for m in sizes]
    rows = []
    for rep in range(repeats):
        for k, sub in enumerate(subsets):
            for v in variants:
                cfg = DetectionConfig.variant(v)
                t0 = time.perf_counter()
                res = detect(sub, cfg)
                dt = time.perf_counter() - t0
                auc = None
                y = sub_labels[k]
                if y is not None and 0 < y.sum() < len(y):
                    auc = roc_auc(ScoredLabels(res.scores, y))[1]
                rows.append(
                    {
                        "variant": v,
                        "fraction": (k + 1) / fractions,
                        "n": sub.n,
                        "repeat": rep,
                        "seconds": dt,
                        "iterations": res.iterations_run,
                        "auc": auc,
                    }
                )
    fits = {}
    for v in variants:
        mean_t = [
            float(np.mean([r["seconds"] for r in rows if r["variant"] == v and r["n"] == m]))
            for m in sizes
        ]
        a, b, r2 = linear_fit(sizes, mean_t)
        fits[v] = {"intercept": a, "slope": b, "r_squared": r2, "mean_seconds": mean_t}
    return rows, {"sizes": sizes, "fits": fits}


def cmd_bench(args) -> int:
    variants = [v.strip() for v in args.variants.split(",") if v.strip()]
    bad = [v for v in variants if v not in VARIANTS]
    if bad or not variants:
        raise UsageError(f"unknown variant(s) {bad}; choose from {', '.join(VARIANTS)}")
    if args.fractions < 2 or args.repeats < 1:
        raise UsageError("--fractions must be >= 2 and --repeats >= 1")
    labeled = None
    try:
        if args.input:
            schema = Schema.load(args.schema) if args.schema else None
            data = load_csv(args.input, schema)
            if args.labels:
                lab = read_labels(args.labels)
                if sorted(lab) != list(range(data.n)):
                    raise UsageError("label case ids do not match the input rows")
                labeled = LabeledDataset(data, tuple(lab[g] for g in range(data.n)))
        else:
            labeled = generate(GeneratorSpec(args.kind, args.n, args.seed))
            data = labeled.data
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    config = RunConfig.from_args(args)
    rows, summary = run_bench(labeled, data, variants, args.fractions, args.repeats, args.seed)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "fraction", "n", "repeat", "seconds", "iterations", "auc"])
        for r in rows:
            w.writerow(
                [
                    r["variant"],
                    format_number(r["fraction"]),
                    r["n"],
                    r["repeat"],
                    f"{r['seconds']:.6f}",
                    r["iterations"],
                    "" if r["auc"] is None else format_number(r["auc"]),
                ]
            )
    _write_manifest(args.out, config, summary)
    for v, fit in summary["fits"].items():
        print(f"{v}: slope {fit['slope'] * 1e6:.4f} s per 1M cases, R^2 {fit['r_squared']:.4f}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="secoda", description="SECODA anomaly detection")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="score a CSV file")
    d.add_argument("--input", required=True)
    d.add_argument("--schema", help="schema JSON sidecar; inferred when absent")
    d.add_argument("--output", default="scores.csv")
    d.add_argument("--trace", help="write per-iteration JSON lines here")
    d.add_argument("--fraction", type=float, default=0.003)
    d.add_argument("--prune-quantile", type=float, default=0.95)
    d.add_argument("--no-prune", action="store_true")
    d.add_argument("--no-step", action="store_true")
    d.add_argument("--unweighted", action="store_true")
    d.add_argument("--range", choices=["working", "global"], default="working")
    d.add_argument("--max-iter", type=int, default=1000)
    d.add_argument(
        "--missing-token",
        action="append",
        help="cell text read as missing (repeatable; replaces the defaults '' and 'NA')",
    )
    d.add_argument("--top", type=int, default=30)
    d.add_argument("--workers", type=int, default=1)
    d.set_defaults(func=cmd_detect)

    g = sub.add_parser("generate", help="write a labeled synthetic dataset")
    g.add_argument("--kind", required=True, choices=sorted(TABLE_SIZES))
    g.add_argument("--n", type=int, default=None, help="default: the kind's reference size")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--labels-out", required=True)
    g.add_argument("--schema-out")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("evaluate", help="score quality against labels")
    e.add_argument("--scores", required=True)
    e.add_argument("--labels", required=True)
    e.add_argument("--bootstrap", type=int, default=10000)
    e.add_argument("--partial-spec", type=float, default=0.9)
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--metrics-out", default="metrics.json")
    e.add_argument("--roc-out")
    e.add_argument("--pr-out")
    e.add_argument("--band-out")
    e.add_argument("--workers", type=int, default=1)
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="time variants on nested subsets")
    b.add_argument("--input")
    b.add_argument("--schema")
    b.add_argument("--labels")
    b.add_argument("--kind", choices=sorted(TABLE_SIZES), default="helix")
    b.add_argument("--n", type=int, default=500_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--variants", default="final,pruneless,stepless")
    b.add_argument("--fractions", type=int, default=5)
    b.add_argument("--repeats", type=int, default=1)
    b.add_argument("--out", default="bench.csv")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, SchemaError, CSVFormatError, MetricsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
