"""Evaluation protocol and the post-hoc statistical checks.

The protocol is a stratified 80-20 split with stratified k-fold CV inside
the training portion: each fold standardizes on its own training rows,
selects features by RFE, grid-searches the stacked ensemble, and scores
the held-out fold. The final model refits on the full training split and
scores the 20% holdout once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, asdict, replace

import numpy as np
from scipy import special as sp_special
from scipy import stats as sp_stats

from .errors import (
    ComputationError,
    DegenerateVariance,
    IncompletePairs,
    InputError,
    ShapeMismatch,
)
from .models import (
    GridSpec,
    StackedConfig,
    _accuracy,
    _f1_high,
    grid_search,
    train_stacked,
)
from .selection import FeatureMatrix, RfeConfig, Standardizer, rfe
from .splits import FoldPlan, split_80_20, stratified_kfold  # re-exported

__all__ = [
    "EvalConfig", "EvalReport", "TestResult", "FoldPlan",
    "split_80_20", "stratified_kfold", "cross_validated_scores",
    "evaluate_pipeline", "paired_t_test", "ks_normality", "carryover_analysis",
]


@dataclass
class EvalConfig:
    k: int = 8
    test_fraction: float = 0.2
    seed: int = 0
    inner_folds: int = 3
    rfe: RfeConfig = field(default_factory=RfeConfig)
    grid: GridSpec = field(default_factory=GridSpec)
    stacking: StackedConfig = field(default_factory=StackedConfig)
    grid_scope: str = "nested"     # "nested" or "global" (optimistic)
    rfe_scope: str = "per-fold"    # "per-fold" or "full-dataset" (leak-prone)

    def __post_init__(self):
        if self.grid_scope not in ("nested", "global"):
            raise InputError(f"unknown grid scope {self.grid_scope!r}")
        if self.rfe_scope not in ("per-fold", "full-dataset"):
            raise InputError(f"unknown RFE scope {self.rfe_scope!r}")


def _restrict_to_kind(fm: FeatureMatrix, model_kind: str) -> FeatureMatrix:
    if model_kind == "connectivity":
        return fm
    if model_kind != "baseline":
        raise InputError(f"unknown model kind {model_kind!r}")
    if fm.kinds is None:
        raise InputError("feature matrix has no kind tags; cannot restrict to spectral")
    names = [n for n, k in zip(fm.names, fm.kinds) if k == "spectral"]
    if not names:
        raise InputError("no spectral features present")
    return fm.column_subset(names)


def _fit_fold_model(X_tr, y_tr, names, cfg: EvalConfig, fold_seed: int,
                    fixed_selected=None, fixed_config=None):
    """Standardize -> RFE -> grid search -> stacked fit, on training rows only."""
    scaler = Standardizer.fit(X_tr)
    X_std = scaler.transform(X_tr)
    if fixed_selected is None:
        ranking = rfe(X_std, y_tr, names, cfg.rfe)
        selected = ranking.selected
    else:
        selected = fixed_selected
    cols = [names.index(n) for n in selected]
    X_sel = X_std[:, cols]
    if fixed_config is None:
        best_cfg, _ = grid_search(
            X_sel, y_tr, cfg.grid, folds=cfg.inner_folds, seed=fold_seed,
            template=cfg.stacking,
        )
    else:
        best_cfg = replace(fixed_config, seed=fold_seed)
    model = train_stacked(X_sel, y_tr, best_cfg)
    return scaler, selected, cols, best_cfg, model


def cross_validated_scores(
    X: np.ndarray, y: np.ndarray, names: list[str], cfg: EvalConfig,
) -> dict:
    """Stratified k-fold CV of the full selection + classification pipeline.

    Returns per-fold accuracy/F1 and selected features, their means and
    population SDs, and per-fold diagnostics (standardizer statistics) for
    leakage checks.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    plan = stratified_kfold(y, cfg.k, seed=cfg.seed)

    fixed_selected = None
    fixed_config = None
    if cfg.rfe_scope == "full-dataset":
        scaler_all = Standardizer.fit(X)
        fixed_selected = rfe(scaler_all.transform(X), y, names, cfg.rfe).selected
    if cfg.grid_scope == "global":
        scaler_all = Standardizer.fit(X)
        sel = fixed_selected or rfe(scaler_all.transform(X), y, names, cfg.rfe).selected
        cols = [names.index(n) for n in sel]
        fixed_config, _ = grid_search(
            scaler_all.transform(X)[:, cols], y, cfg.grid,
            folds=cfg.inner_folds, seed=cfg.seed, template=cfg.stacking,
        )

    per_fold = []
    diagnostics = []
    for fold in range(cfg.k):
        tr, va = plan.fold_indices(fold)
        try:
            scaler, selected, cols, best_cfg, model = _fit_fold_model(
                X[tr], y[tr], names, cfg, fold_seed=cfg.seed * 100 + fold,
                fixed_selected=fixed_selected, fixed_config=fixed_config,
            )
            pred = model.predict(scaler.transform(X[va])[:, cols])
        except Exception as exc:
            raise ComputationError(f"fold {fold} failed: {exc}") from exc
        per_fold.append({
            "fold": fold,
            "accuracy": _accuracy(y[va], pred),
            "f1": _f1_high(y[va], pred),
            "selected_features": list(selected),
        })
        diagnostics.append({
            "fold": fold,
            "scaler_mean": scaler.mean.copy(),
            "scaler_std": scaler.std.copy(),
            "config": best_cfg,
        })
    accs = [f["accuracy"] for f in per_fold]
    f1s = [f["f1"] for f in per_fold]
    return {
        "per_fold": per_fold,
        "mean_accuracy": float(np.mean(accs)),
        "sd_accuracy": float(np.std(accs)),
        "mean_f1": float(np.mean(f1s)),
        "sd_f1": float(np.std(f1s)),
        "diagnostics": diagnostics,
    }


@dataclass
class EvalReport:
    model_kind: str
    per_fold: list[dict]
    mean_accuracy: float
    sd_accuracy: float
    mean_f1: float
    sd_f1: float
    holdout: dict
    provenance: dict

    def to_json_dict(self) -> dict:
        return {
            "schema": "EVAL1",
            "model_kind": self.model_kind,
            "per_fold": self.per_fold,
            "mean_accuracy": self.mean_accuracy,
            "sd_accuracy": self.sd_accuracy,
            "mean_f1": self.mean_f1,
            "sd_f1": self.sd_f1,
            "holdout": self.holdout,
            "provenance": self.provenance,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, doc: dict) -> "EvalReport":
        if doc.get("schema") != "EVAL1":
            raise InputError("not an EVAL1 document")
        report = cls(
            model_kind=doc["model_kind"],
            per_fold=doc["per_fold"],
            mean_accuracy=doc["mean_accuracy"],
            sd_accuracy=doc["sd_accuracy"],
            mean_f1=doc["mean_f1"],
            sd_f1=doc["sd_f1"],
            holdout=doc["holdout"],
            provenance=doc.get("provenance", {}),
        )
        accs = [f["accuracy"] for f in report.per_fold]
        f1s = [f["f1"] for f in report.per_fold]
        checks = [
            (report.mean_accuracy, float(np.mean(accs))),
            (report.sd_accuracy, float(np.std(accs))),
            (report.mean_f1, float(np.mean(f1s))),
            (report.sd_f1, float(np.std(f1s))),
        ]
        for stored, recomputed in checks:
            if abs(stored - recomputed) > 1e-12:
                raise InputError(
                    f"EVAL1 aggregate {stored} does not match per-fold values "
                    f"({recomputed})"
                )
        return report


def evaluate_pipeline(
    fm: FeatureMatrix, y: np.ndarray, model_kind: str, cfg: EvalConfig,
) -> EvalReport:
    """Full protocol for one model kind ("baseline" = spectral only,
    "connectivity" = spectral + PLV)."""
    fm = _restrict_to_kind(fm, model_kind)
    y = np.asarray(y, dtype=np.int64)
    if fm.X.shape[0] != y.size:
        raise ShapeMismatch("features and labels are not aligned")
    train_idx, test_idx = split_80_20(y, seed=cfg.seed, test_fraction=cfg.test_fraction)
    X_train, y_train = fm.X[train_idx], y[train_idx]

    cv = cross_validated_scores(X_train, y_train, fm.names, cfg)

    scaler, selected, cols, best_cfg, model = _fit_fold_model(
        X_train, y_train, fm.names, cfg, fold_seed=cfg.seed,
    )
    holdout_pred = model.predict(scaler.transform(fm.X[test_idx])[:, cols])
    holdout = {
        "accuracy": _accuracy(y[test_idx], holdout_pred),
        "f1": _f1_high(y[test_idx], holdout_pred),
    }

    frequency: dict[str, int] = {}
    for f in cv["per_fold"]:
        for name in f["selected_features"]:
            frequency[name] = frequency.get(name, 0) + 1
    provenance = {
        "seeds": {"master": cfg.seed},
        "configs": {
            "k": cfg.k,
            "test_fraction": cfg.test_fraction,
            "inner_folds": cfg.inner_folds,
            "rfe": asdict(cfg.rfe),
            "grid": asdict(cfg.grid),
            "stacking_template": asdict(cfg.stacking),
            "grid_scope": cfg.grid_scope
            + (" (optimistic: tuned once on all training data)" if cfg.grid_scope == "global" else ""),
            "rfe_scope": cfg.rfe_scope
            + (" (leak-prone: selected once on all data)" if cfg.rfe_scope == "full-dataset" else ""),
            "final_config": {
                "rf": asdict(best_cfg.rf), "lr": asdict(best_cfg.lr),
                "svm": asdict(best_cfg.svm), "meta_svm": asdict(best_cfg.meta_svm),
            },
        },
        "final_selected_features": list(selected),
        "selected_feature_frequency": dict(sorted(
            frequency.items(), key=lambda kv: (-kv[1], kv[0])
        )),
        "feature_aggregation": "per-fold selections; frequency over folds",
        "f1_positive_class": "High",
    }
    return EvalReport(
        model_kind=model_kind,
        per_fold=cv["per_fold"],
        mean_accuracy=cv["mean_accuracy"],
        sd_accuracy=cv["sd_accuracy"],
        mean_f1=cv["mean_f1"],
        sd_f1=cv["sd_f1"],
        holdout=holdout,
        provenance=provenance,
    )


# --- statistics ----------------------------------------------------------------


@dataclass
class TestResult:
    statistic: float
    p_value: float
    df: float | None = None
    n: int = 0
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (0.0 <= self.p_value <= 1.0 or math.isnan(self.p_value)):
            raise ComputationError(f"p-value {self.p_value} outside [0, 1]")


def paired_t_test(a: np.ndarray, b: np.ndarray) -> TestResult:
    """Two-sided paired t-test on d = a - b with sample SD (n-1 denominator)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeMismatch("paired samples must be equal-length vectors")
    n = a.size
    if n < 2:
        raise InputError("need at least two pairs")
    d = a - b
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise DegenerateVariance("all paired differences are identical")
    t = float(np.mean(d)) / (sd / math.sqrt(n))
    df = n - 1
    p = 2.0 * float(sp_stats.t.sf(abs(t), df))
    return TestResult(
        statistic=t, p_value=p, df=float(df), n=n,
        details={
            "mean_a": float(np.mean(a)), "sd_a": float(np.std(a, ddof=1)),
            "mean_b": float(np.mean(b)), "sd_b": float(np.std(b, ddof=1)),
            "mean_diff": float(np.mean(d)), "sd_diff": sd,
        },
    )


def kolmogorov_p(d: float, n: int) -> float:
    """Asymptotic Kolmogorov p-value with the Stephens small-sample correction."""
    lam = (math.sqrt(n) + 0.12 + 0.11 / math.sqrt(n)) * d
    return min(max(float(sp_special.kolmogorov(lam)), 0.0), 1.0)


def _lilliefors_p(d: float, n: int) -> float:
    """Dallal-Wilkinson approximation for the normality test with estimated
    mean and SD (the Lilliefors null)."""
    if n > 100:
        kd = d * (n / 100.0) ** 0.49
        nd = 100.0
    else:
        kd = d
        nd = float(n)
    p = math.exp(
        -7.01256 * kd * kd * (nd + 2.78019)
        + 2.99587 * kd * math.sqrt(nd + 2.78019)
        - 0.122119 + 0.974598 / math.sqrt(nd) + 1.67997 / nd
    )
    if p > 0.1:
        kk = (math.sqrt(n) - 0.01 + 0.85 / math.sqrt(n)) * d
        if kk <= 0.302:
            p = 1.0
        elif kk <= 0.5:
            p = 2.76773 - 19.828315 * kk + 80.709644 * kk ** 2 \
                - 138.55152 * kk ** 3 + 81.218052 * kk ** 4
        elif kk <= 0.9:
            p = -4.901232 + 40.662806 * kk - 97.490286 * kk ** 2 \
                + 94.029866 * kk ** 3 - 32.355711 * kk ** 4
        elif kk <= 1.31:
            p = 6.198765 - 19.558097 * kk + 23.186922 * kk ** 2 \
                - 12.234627 * kk ** 3 + 2.423045 * kk ** 4
        else:
            p = 0.0
    return min(max(p, 0.0), 1.0)


def ks_normality(x: np.ndarray) -> TestResult:
    """Kolmogorov-Smirnov distance to N(mean(x), sd(x)).

    ``p_value`` uses the asymptotic Kolmogorov distribution with the
    Stephens small-sample correction, matching the usual reporting style
    where the estimated parameters are ignored. Because that convention is
    strongly conservative under estimated parameters, the result also
    carries ``p_calibrated`` (Dallal-Wilkinson), which is the value to use
    for an actual normality decision; ``params_estimated`` flags the caveat.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size < 5:
        raise InputError("need at least 5 observations")
    n = x.size
    mean = float(np.mean(x))
    sd = float(np.std(x, ddof=1))
    if sd == 0.0:
        raise DegenerateVariance("sample has zero variance")
    xs = np.sort(x)
    cdf = sp_stats.norm.cdf(xs, loc=mean, scale=sd)
    i = np.arange(1, n + 1)
    d_plus = float(np.max(i / n - cdf))
    d_minus = float(np.max(cdf - (i - 1) / n))
    d = max(d_plus, d_minus)
    p_asymptotic = kolmogorov_p(d, n)
    p_calibrated = _lilliefors_p(d, n)
    return TestResult(
        statistic=d, p_value=p_asymptotic, df=None, n=n,
        details={
            "mean": mean, "sd": sd,
            "p_calibrated": p_calibrated,
            "params_estimated": True,
            "caveat": "mean and SD estimated from the sample; p_value follows the "
                      "uncorrected reporting convention, p_calibrated adjusts for it",
        },
    )


def carryover_analysis(records, subset=None) -> dict:
    """Paired checks that merging the two conditions is defensible.

    Runs Desktop-vs-VR and first-vs-second-exposure paired t-tests, each
    preceded by a KS normality check on the differences. The verdict is
    "no blocker" iff every computable t-test has p >= .05.
    """
    from .labeling import FOUR_SCALE_SET, aggregate_subscales
    from .recordings import Condition

    subset = subset or FOUR_SCALE_SET
    by_subject: dict[str, dict] = {}
    for rec in records:
        entry = by_subject.setdefault(rec.subject_id, {})
        key = rec.condition
        if key in entry:
            raise IncompletePairs(f"subject {rec.subject_id} has duplicate {key.value}")
        entry[key] = rec
    desktop, vr, first, second = [], [], [], []
    for subject in sorted(by_subject):
        entry = by_subject[subject]
        if set(entry) != {Condition.VR, Condition.DESKTOP}:
            raise IncompletePairs(f"subject {subject} is missing a condition")
        d_rec, v_rec = entry[Condition.DESKTOP], entry[Condition.VR]
        if {d_rec.order, v_rec.order} != {1, 2}:
            raise IncompletePairs(f"subject {subject} has orders "
                                  f"{[d_rec.order, v_rec.order]}, expected 1 and 2")
        d_score = aggregate_subscales(d_rec, subset)
        v_score = aggregate_subscales(v_rec, subset)
        desktop.append(d_score)
        vr.append(v_score)
        if d_rec.order == 1:
            first.append(d_score)
            second.append(v_score)
        else:
            first.append(v_score)
            second.append(d_score)

    results: dict[str, object] = {"n_subjects": len(desktop), "messages": []}
    blockers = []
    for name, a, b in (
        ("condition", np.array(desktop), np.array(vr)),
        ("order", np.array(first), np.array(second)),
    ):
        try:
            results[f"{name}_ks"] = ks_normality(a - b)
        except DegenerateVariance:
            results[f"{name}_ks"] = None
        try:
            t = paired_t_test(a, b)
            results[f"{name}_t"] = t
            if t.p_value < 0.05:
                blockers.append(name)
        except DegenerateVariance:
            results[f"{name}_t"] = None
            results["messages"].append(
                f"{name}: no evidence computable (all paired differences identical)"
            )
    results["verdict"] = "no blocker" if not blockers else (
        "blocker: " + ", ".join(blockers)
    )
    return results
