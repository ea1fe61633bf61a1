import json
import math

import numpy as np
import pytest
from scipy import special as sp_special
from scipy import stats as sp_stats

from eegworkload.errors import (
    ClassSmallerThanK,
    ClassTooSmall,
    ComputationError,
    DegenerateVariance,
    IncompletePairs,
    InputError,
    SingleClassInput,
)
from eegworkload.evaluation import (
    EvalConfig,
    EvalReport,
    carryover_analysis,
    cross_validated_scores,
    evaluate_pipeline,
    kolmogorov_p,
    ks_normality,
    paired_t_test,
    split_80_20,
    stratified_kfold,
)
from eegworkload.labeling import ALL_SUBSCALES, Subscale, TlxRecord
from eegworkload.models import GridSpec, RandomForestConfig, LogRegConfig, StackedConfig, SvmConfig
from eegworkload.recordings import Condition, TaskKind
from eegworkload.selection import FeatureMatrix, RfeConfig


def fast_eval_config(seed=0, k=4, n_select=4):
    return EvalConfig(
        k=k, test_fraction=0.2, seed=seed, inner_folds=2,
        rfe=RfeConfig(n_select=n_select),
        grid=GridSpec.singleton(10, 1.0, 1.0),
        stacking=StackedConfig(
            rf=RandomForestConfig(n_estimators=10),
            lr=LogRegConfig(), svm=SvmConfig(), meta_svm=SvmConfig(C=10.0),
            oof_folds=2,
        ),
    )


def feature_matrix(X, kinds=None):
    names = [f"f{i:02d}" for i in range(X.shape[1])]
    return FeatureMatrix(names=names, X=X, kinds=kinds or ["spectral"] * X.shape[1])


class TestSplits:
    def test_98_balanced_split(self):
        labels = np.array([0, 1] * 49)
        train, test = split_80_20(labels, seed=3)
        assert train.size == 78 and test.size == 20
        assert int(np.sum(labels[train])) == 39
        assert int(np.sum(labels[test])) == 10
        assert np.intersect1d(train, test).size == 0

    def test_tiny_split(self):
        labels = np.array([0] * 5 + [1] * 5)
        train, test = split_80_20(labels, seed=0)
        assert train.size == 8 and test.size == 2
        assert int(np.sum(labels[test])) == 1

    def test_single_class_rejected(self):
        with pytest.raises((ClassTooSmall, SingleClassInput)):
            split_80_20(np.zeros(20, dtype=int), seed=0)

    def test_kfold_98_sizes_and_balance(self):
        labels = np.array([0, 1] * 49)
        plan = stratified_kfold(labels, 8, seed=11)
        sizes = [int(np.sum(plan.assignments == f)) for f in range(8)]
        assert sorted(set(sizes)) in ([12, 13], [12], [13])
        assert sum(sizes) == 98
        for f in range(8):
            members = labels[plan.assignments == f]
            low, high = int(np.sum(members == 0)), int(np.sum(members == 1))
            assert {low, high} <= {6, 7}
            assert abs(low - high) <= 1

    def test_kfold_exact_division(self):
        labels = np.array([0] * 8 + [1] * 8)
        plan = stratified_kfold(labels, 8, seed=0)
        for f in range(8):
            members = labels[plan.assignments == f]
            assert members.size == 2
            assert int(np.sum(members)) == 1

    def test_kfold_class_multiset_stable_under_permutation(self):
        labels = np.array([0, 1] * 20)
        perm = np.random.default_rng(5).permutation(40)
        plan_a = stratified_kfold(labels, 4, seed=9)
        plan_b = stratified_kfold(labels[perm], 4, seed=9)
        for cls in (0, 1):
            counts_a = sorted(
                int(np.sum((plan_a.assignments == f) & (labels == cls)))
                for f in range(4)
            )
            counts_b = sorted(
                int(np.sum((plan_b.assignments == f) & (labels[perm] == cls)))
                for f in range(4)
            )
            assert counts_a == counts_b

    def test_kfold_class_smaller_than_k(self):
        labels = np.array([0] * 3 + [1] * 20)
        with pytest.raises(ClassSmallerThanK):
            stratified_kfold(labels, 8, seed=0)


class TestPipelineEvaluation:
    def test_separable_data_high_accuracy(self, rng):
        n = 60
        X = rng.normal(size=(n, 10))
        y = (X[:, 0] > 0).astype(int)
        X[:, 0] = X[:, 0] + np.where(y == 1, 3.0, -3.0)
        fm = feature_matrix(X)
        report = evaluate_pipeline(fm, y, "connectivity", fast_eval_config())
        assert report.mean_accuracy >= 0.9
        assert report.holdout["accuracy"] >= 0.9

    def test_chance_level_on_null(self, rng):
        X = rng.normal(size=(98, 12))
        y = np.array([0, 1] * 49)
        report = evaluate_pipeline(feature_matrix(X), y, "connectivity",
                                   fast_eval_config(seed=1))
        assert 0.35 <= report.mean_accuracy <= 0.65

    def test_model_kind_restricts_columns(self, rng):
        X = rng.normal(size=(40, 6))
        y = (X[:, 5] > 0).astype(int)
        X[:, 5] += np.where(y == 1, 3.0, -3.0)
        kinds = ["spectral"] * 3 + ["plv"] * 3
        fm = feature_matrix(X, kinds=kinds)
        cfg = fast_eval_config(k=3, n_select=2)
        baseline = evaluate_pipeline(fm, y, "baseline", cfg)
        connectivity = evaluate_pipeline(fm, y, "connectivity", cfg)
        for fold in baseline.per_fold:
            assert all(f in fm.names[:3] for f in fold["selected_features"])
        assert connectivity.mean_accuracy >= baseline.mean_accuracy

    def test_eval1_schema_and_recompute_guard(self, rng):
        X = rng.normal(size=(40, 6))
        y = np.array([0, 1] * 20)
        report = evaluate_pipeline(feature_matrix(X), y, "connectivity",
                                   fast_eval_config(k=3, n_select=2))
        doc = report.to_json_dict()
        assert doc["schema"] == "EVAL1"
        assert {"model_kind", "per_fold", "mean_accuracy", "sd_accuracy",
                "mean_f1", "sd_f1", "holdout", "provenance"} <= set(doc)
        EvalReport.from_json_dict(json.loads(report.to_json()))
        doc["mean_accuracy"] += 0.01
        with pytest.raises(InputError):
            EvalReport.from_json_dict(doc)

    def test_determinism_byte_identical(self, rng):
        X = rng.normal(size=(40, 6))
        y = np.array([0, 1] * 20)
        fm = feature_matrix(X)
        cfg = fast_eval_config(k=3, n_select=2, seed=7)
        a = evaluate_pipeline(fm, y, "connectivity", cfg).to_json()
        b = evaluate_pipeline(fm, y, "connectivity", cfg).to_json()
        assert a == b

    def test_leakage_sentinel(self, rng):
        # fold-train statistics must ignore validation rows entirely
        X = rng.normal(size=(48, 6))
        y = np.array([0, 1] * 24)
        names = [f"f{i}" for i in range(6)]
        cfg = fast_eval_config(k=4, n_select=2)
        clean = cross_validated_scores(X, y, names, cfg)
        target_fold = 2
        val_rows = np.nonzero(
            stratified_kfold(y, cfg.k, seed=cfg.seed).assignments == target_fold
        )[0]
        poisoned = X.copy()
        poisoned[val_rows[0], :] = 1e6
        dirty = cross_validated_scores(poisoned, y, names, cfg)
        np.testing.assert_array_equal(
            clean["diagnostics"][target_fold]["scaler_mean"],
            dirty["diagnostics"][target_fold]["scaler_mean"],
        )
        np.testing.assert_array_equal(
            clean["diagnostics"][target_fold]["scaler_std"],
            dirty["diagnostics"][target_fold]["scaler_std"],
        )
        assert (clean["per_fold"][target_fold]["selected_features"]
                == dirty["per_fold"][target_fold]["selected_features"])

    def test_fold_failure_diagnostic_names_fold(self, rng):
        X = rng.normal(size=(24, 4))
        y = np.array([0, 1] * 12)
        cfg = fast_eval_config(k=3, n_select=2)
        cfg.stacking.oof_folds = 12  # impossible inside a fold
        with pytest.raises(ComputationError, match="fold 0"):
            cross_validated_scores(X, y, [f"f{i}" for i in range(4)], cfg)


def t_sf_df2(t):
    """Closed-form Student-t survival for df=2 (independent oracle)."""
    return 0.5 * (1.0 - t / math.sqrt(t * t + 2.0))


class TestPairedT:
    def test_pinned_example(self):
        a = np.array([2.0, 4.0, 6.0])
        b = np.array([1.0, 2.0, 3.0])
        res = paired_t_test(a, b)  # differences [1, 2, 3]
        assert res.statistic == pytest.approx(2.0 * math.sqrt(3.0), abs=1e-3)
        assert res.statistic == pytest.approx(3.464, abs=1e-3)
        assert res.df == 2
        want_p = 2.0 * t_sf_df2(res.statistic)
        assert res.p_value == pytest.approx(want_p, abs=1e-12)
        assert res.p_value == pytest.approx(0.0742, abs=5e-4)

    def test_zero_mean_differences(self):
        res = paired_t_test(np.array([0.0, 2.0]), np.array([1.0, 1.0]))
        assert res.statistic == 0.0
        assert res.p_value == 1.0

    def test_identical_samples_degenerate(self):
        x = np.array([1.0, 2.0, 3.0])
        with pytest.raises(DegenerateVariance):
            paired_t_test(x, x)

    def test_sign_antisymmetry(self, rng):
        a = rng.normal(size=20)
        b = rng.normal(size=20)
        assert paired_t_test(a, b).statistic == -paired_t_test(b, a).statistic

    def test_paper_scale_reference(self):
        # t(48) = -1.81 corresponds to a two-sided p near .07; oracle via the
        # regularized incomplete beta identity
        df, t = 48, 1.81
        want = sp_special.betainc(df / 2.0, 0.5, df / (df + t * t))
        rng = np.random.default_rng(77)
        # construct a paired sample with that exact t statistic
        d = rng.normal(size=49)
        d = (d - d.mean()) / d.std(ddof=1)  # mean 0, sd 1
        target_mean = -t / math.sqrt(49)
        res = paired_t_test(d + target_mean, np.zeros(49))
        assert res.statistic == pytest.approx(-1.81, abs=1e-9)
        assert res.p_value == pytest.approx(want, abs=1e-12)
        assert round(res.p_value, 2) in (0.07, 0.08)

    def test_location_shift_moves_t_monotonically(self, rng):
        d = rng.normal(size=30)
        base = abs(paired_t_test(d + 0.5, np.zeros(30)).statistic)
        higher = abs(paired_t_test(d + 1.0, np.zeros(30)).statistic)
        scaled = paired_t_test(3.0 * (d + 0.5), np.zeros(30)).statistic
        assert higher > base
        assert scaled == pytest.approx(paired_t_test(d + 0.5, np.zeros(30)).statistic,
                                       abs=1e-9)


class TestKsNormality:
    def test_paper_parity_p_from_d(self):
        assert round(kolmogorov_p(0.13, 49), 2) == 0.36

    def test_quantile_construction_small_d(self):
        for n in (50, 200):
            x = sp_stats.norm.ppf((np.arange(1, n + 1) - 0.5) / n)
            res = ks_normality(x)
            assert res.statistic <= 1.0 / n

    def test_degenerate_variance(self):
        with pytest.raises(DegenerateVariance):
            ks_normality(np.full(10, 2.5))

    def test_needs_five_observations(self):
        with pytest.raises(InputError):
            ks_normality(np.array([1.0, 2.0, 3.0]))

    def test_calibrated_p_present_with_caveat(self, rng):
        res = ks_normality(rng.normal(size=100))
        assert res.details["params_estimated"]
        assert 0.0 <= res.details["p_calibrated"] <= 1.0
        assert "p_calibrated" in res.details


def make_tlx_table(n_subjects, seed, order_effect=0.0, condition_effect=0.0,
                   identical_conditions=False):
    rng = np.random.default_rng(seed)
    records = []
    for i in range(n_subjects):
        base = float(np.clip(50 + rng.normal(0, 12), 5, 95))
        vr_first = i % 2 == 0
        for condition in (Condition.DESKTOP, Condition.VR):
            is_vr = condition is Condition.VR
            order = 1 if (is_vr == vr_first) else 2
            score = base + rng.normal(0, 4)
            if identical_conditions:
                score = base
            if is_vr:
                score += condition_effect
            if order == 2:
                score += order_effect
            score = float(np.clip(score, 0, 100))
            records.append(TlxRecord(
                subject_id=f"s{i:03d}", condition=condition,
                task=TaskKind.MEDIUM_TURN if is_vr == (i % 2 == 0) else TaskKind.SPEED_CHANGE,
                order=order,
                subscales={s: score for s in ALL_SUBSCALES},
            ))
    return records


class TestCarryover:
    def test_no_effect_no_blocker(self):
        results = carryover_analysis(make_tlx_table(50, seed=1))
        assert results["verdict"] == "no blocker"
        assert results["condition_t"].df == 49
        assert results["order_t"].p_value >= 0.05

    def test_order_effect_detected(self):
        detected = 0
        for seed in range(20):
            results = carryover_analysis(
                make_tlx_table(50, seed=seed, order_effect=10.0)
            )
            if results["order_t"].p_value < 0.01:
                detected += 1
        assert detected >= 19

    def test_condition_identical_surfaced(self):
        results = carryover_analysis(
            make_tlx_table(20, seed=2, identical_conditions=True)
        )
        assert results["condition_t"] is None
        assert any("no evidence computable" in m for m in results["messages"])

    def test_incomplete_pairs(self):
        records = make_tlx_table(10, seed=3)
        with pytest.raises(IncompletePairs):
            carryover_analysis(records[:-1])
