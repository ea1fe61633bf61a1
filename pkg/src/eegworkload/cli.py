"""Command-line pipeline orchestrator.

Subcommands: synth, features, labels, select, train, evaluate, stats,
report. Stages communicate through files so each is independently
testable and cacheable. Exit codes: 0 success, 1 computational failure,
2 invalid input or configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from .errors import ComputationError, EegWorkloadError, InputError
from .evaluation import EvalReport, carryover_analysis, evaluate_pipeline
from .extraction import FeatureSet, extract_features
from .labeling import (
    LabelTable,
    LabelValue,
    build_labels,
    parse_subscale_tokens,
    read_tlx_csv,
    subscale_subset_search,
)
from .models import TrainedModel, grid_table_csv, save_model, train_stacked
from .recordings import load_recording_set
from .report import metrics_csv, render_figures, render_table
from .selection import Standardizer, rfe
from .synth import TlxParams, effects_for, gen_dataset, write_dataset


def _common_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, default=None, help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads")
    parser.add_argument("--output", type=Path, required=True, help="output path")


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _load_features(path: Path) -> FeatureSet:
    return FeatureSet.load(path)


def _load_labels(path: Path) -> LabelTable:
    with open(path) as fh:
        return LabelTable.from_json_dict(json.load(fh))


def _aligned_labels(features: FeatureSet, table: LabelTable) -> np.ndarray:
    lookup = table.label_map()
    y = np.empty(len(features.samples), dtype=np.int64)
    for i, key in enumerate(features.matrix.sample_keys):
        if key not in lookup:
            raise InputError(f"no label for sample {key}")
        y[i] = 1 if lookup[key] is LabelValue.HIGH else 0
    return y


def cmd_synth(args) -> int:
    cfg = config_mod.load_config(args.config)
    seed = 0 if args.seed is None else args.seed
    syn = cfg["synth"]
    spec = effects_for(
        args.effect,
        fs=syn["fs"],
        duration_s=args.duration if args.duration else syn["duration_s"],
        baseline_duration_s=syn["baseline_duration_s"],
        noise_amplitude=syn["noise_amplitude"],
        osc_amplitude=syn["osc_amplitude"],
        seed=seed,
    )
    dataset = gen_dataset(args.subjects, spec, TlxParams())
    written = write_dataset(dataset, args.output)
    manifest = dataset.manifest()
    manifest["provenance"] = config_mod.provenance(cfg, seed)
    _write_json(args.output / "manifest.json", manifest)
    print(f"wrote {len(written)} files to {args.output}")
    return 0


def cmd_features(args) -> int:
    cfg = config_mod.load_config(args.config)
    recset = load_recording_set(args.dataset)
    manifest_path = Path(args.dataset) / "manifest.json"
    task_duration = cfg["task"]["duration_s"]
    if args.config is None and manifest_path.exists():
        # synthetic datasets carry their duration; still validated below
        task_duration = json.loads(manifest_path.read_text())["duration_s"]
    ext_cfg = config_mod.extraction_config(cfg, spectral_only=args.spectral_only, jobs=args.jobs)
    ext_cfg.task_duration_s = task_duration
    features = extract_features(recset, ext_cfg)
    doc = features.to_json_dict()
    doc["provenance"] = config_mod.provenance(cfg, args.seed)
    _write_json(args.output, doc)
    print(f"wrote {len(features.samples)} samples x {len(features.matrix.names)} "
          f"features to {args.output}")
    return 0


def cmd_labels(args) -> int:
    cfg = config_mod.load_config(args.config)
    records = read_tlx_csv(args.tlx)
    spec = args.subscales or cfg["labeling"]["subscales"]
    if spec.strip().lower() == "search":
        if args.features is None:
            raise InputError("--subscales search requires --features")
        features = _load_features(args.features)
        seed = 0 if args.seed is None else args.seed
        ranking, failures = subscale_subset_search(
            records, features.matrix, config_mod.eval_config(cfg, seed=seed),
        )
        best = frozenset(parse_subscale_tokens(",".join(ranking[0]["subset"])))
        table, fit = build_labels(records, best)
        doc = table.to_json_dict()
        doc["search"] = {
            "ranking": ranking,
            "failures": failures,
            "scored_with": "connectivity pipeline (spectral + PLV features)",
        }
    else:
        table, fit = build_labels(records, parse_subscale_tokens(spec))
        doc = table.to_json_dict()
    doc["model"] = {
        "fixed_coefs": fit.fixed_coefs,
        "group_variance": fit.group_variance,
        "residual_variance": fit.residual_variance,
    }
    doc["provenance"] = config_mod.provenance(cfg, args.seed)
    _write_json(args.output, doc)
    n_low = sum(1 for r in table.rows if r["label"] == "Low")
    print(f"labeled {len(table.rows)} samples ({n_low} Low / "
          f"{len(table.rows) - n_low} High), threshold {table.threshold:.4f}")
    return 0


def cmd_select(args) -> int:
    cfg = config_mod.load_config(args.config)
    features = _load_features(args.features)
    table = _load_labels(args.labels)
    y = _aligned_labels(features, table)
    matrix = features.matrix
    if args.model_kind == "baseline":
        names = [n for n, k in zip(matrix.names, matrix.kinds) if k == "spectral"]
        matrix = matrix.column_subset(names)
    scaler = Standardizer.fit(matrix.X)
    ranking = rfe(scaler.transform(matrix.X), y, matrix.names, config_mod.rfe_config(cfg))
    doc = ranking.to_json_dict()
    doc["scope"] = "full-dataset (leak-prone: selection saw every sample)"
    doc["model_kind"] = args.model_kind
    doc["provenance"] = config_mod.provenance(cfg, args.seed)
    _write_json(args.output, doc)
    print("selected: " + ", ".join(ranking.selected))
    return 0


def cmd_train(args) -> int:
    cfg = config_mod.load_config(args.config)
    features = _load_features(args.features)
    table = _load_labels(args.labels)
    y = _aligned_labels(features, table)
    matrix = features.matrix
    if args.model_kind == "baseline":
        names = [n for n, k in zip(matrix.names, matrix.kinds) if k == "spectral"]
        matrix = matrix.column_subset(names)
    seed = 0 if args.seed is None else args.seed
    ecfg = config_mod.eval_config(cfg, seed=seed)
    scaler = Standardizer.fit(matrix.X)
    X_std = scaler.transform(matrix.X)
    ranking = rfe(X_std, y, matrix.names, ecfg.rfe)
    cols = [matrix.names.index(n) for n in ranking.selected]
    from .models import grid_search
    best_cfg, table_rows = grid_search(
        X_std[:, cols], y, ecfg.grid, folds=ecfg.inner_folds, seed=seed,
        template=ecfg.stacking,
    )
    model = train_stacked(X_std[:, cols], y, best_cfg)
    sub_scaler = Standardizer(mean=scaler.mean[cols], std=scaler.std[cols])
    bundle = TrainedModel(
        feature_names=list(ranking.selected),
        scaler=sub_scaler,
        stacked=model,
        model_kind=args.model_kind,
    )
    save_model(bundle, args.output)
    grid_csv = args.output.with_suffix(".grid.csv")
    grid_csv.write_text(grid_table_csv(table_rows))
    print(f"trained {args.model_kind} model on {len(y)} samples; "
          f"grid table at {grid_csv}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = config_mod.load_config(args.config)
    features = _load_features(args.features)
    table = _load_labels(args.labels)
    y = _aligned_labels(features, table)
    seed = 0 if args.seed is None else args.seed
    report = evaluate_pipeline(
        features.matrix, y, args.model_kind, config_mod.eval_config(cfg, seed=seed),
    )
    report.provenance["file_provenance"] = config_mod.provenance(cfg, seed)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    args.output.write_text(report.to_json())
    print(render_table([report]))
    return 0


def cmd_stats(args) -> int:
    cfg = config_mod.load_config(args.config)
    records = read_tlx_csv(args.tlx)
    results = carryover_analysis(records)
    doc = {"schema": "STATS1", "n_subjects": results["n_subjects"],
           "verdict": results["verdict"], "messages": results["messages"],
           "provenance": config_mod.provenance(cfg, args.seed)}
    for key in ("condition_t", "order_t", "condition_ks", "order_ks"):
        r = results[key]
        doc[key] = None if r is None else {
            "statistic": r.statistic, "df": r.df, "p_value": r.p_value,
            "n": r.n, **r.details,
        }
    _write_json(args.output, doc)
    for name in ("condition", "order"):
        t = results[f"{name}_t"]
        if t is None:
            print(f"{name}: no evidence computable")
        else:
            print(f"{name}: t({t.df:.0f}) = {t.statistic:.2f}, p = {t.p_value:.3f}")
    print(f"verdict: {results['verdict']}")
    return 0


def cmd_report(args) -> int:
    reports = []
    for path in args.eval:
        with open(path) as fh:
            reports.append(EvalReport.from_json_dict(json.load(fh)))
    outdir = args.output
    outdir.mkdir(parents=True, exist_ok=True)
    table = render_table(reports)
    (outdir / "table.txt").write_text(table)
    (outdir / "metrics.csv").write_text(metrics_csv(reports))
    figures = render_figures(reports, outdir)
    print(table)
    print(f"wrote {outdir / 'table.txt'}, {outdir / 'metrics.csv'}, "
          + ", ".join(str(p) for p in figures))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eegworkload",
        description="EEG workload classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--subjects", type=int, required=True)
    p.add_argument("--effect", choices=["connectivity", "power", "both", "none"],
                   default="connectivity")
    p.add_argument("--duration", type=float, default=None, help="test duration (s)")
    _common_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("features", help="extract normalized features")
    p.add_argument("--dataset", type=Path, required=True)
    p.add_argument("--spectral-only", action="store_true")
    _common_flags(p)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("labels", help="derive binary workload labels from TLX")
    p.add_argument("--tlx", type=Path, required=True)
    p.add_argument("--subscales", type=str, default=None,
                   help="e.g. md,pd,perf,effort or 'search'")
    p.add_argument("--features", type=Path, default=None,
                   help="feature file (required for subset search)")
    _common_flags(p)
    p.set_defaults(func=cmd_labels)

    p = sub.add_parser("select", help="rank features by RFE")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--model-kind", choices=["baseline", "connectivity"],
                   default="connectivity")
    _common_flags(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("train", help="train a stacked model bundle")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--model-kind", choices=["baseline", "connectivity"],
                   default="connectivity")
    _common_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="run the full evaluation protocol")
    p.add_argument("--features", type=Path, required=True)
    p.add_argument("--labels", type=Path, required=True)
    p.add_argument("--model-kind", choices=["baseline", "connectivity"],
                   default="connectivity")
    _common_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("stats", help="carryover / condition checks on a TLX table")
    p.add_argument("--tlx", type=Path, required=True)
    _common_flags(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("report", help="render tables, CSV and figures from EVAL1 files")
    p.add_argument("--eval", type=Path, action="append", required=True,
                   help="EVAL1 file (repeatable)")
    _common_flags(p)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ComputationError, EegWorkloadError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
