import numpy as np
import pytest

from fundus_rdr.evaluation import (
    DegenerateLabels,
    MismatchedCoverage,
    OperatingMode,
    REFERENCE_RESULTS,
    auc,
    build_report,
    ensemble_mean,
    format_reference_table,
    read_predictions_csv,
    report_from_dict,
    report_to_dict,
    roc_curve,
    roc_curve_arrays,
    select_operating_point,
    write_predictions_csv,
)
from fundus_rdr.types import PredictionRecord, RdrLabel

from oracles import concordance_auc, random_instance, rates_at_threshold


def as_records(scores, model_id="m"):
    return [
        PredictionRecord(image_id=f"img_{i:03d}", score=float(s), model_id=model_id)
        for i, s in enumerate(scores)
    ]


def as_labels(labels):
    return {f"img_{i:03d}": RdrLabel(referable=bool(v)) for i, v in enumerate(labels)}


class TestRocCurve:
    def test_perfect_separation_hits_corner(self):
        curve = roc_curve(as_records([0.9, 0.8, 0.2, 0.1]), as_labels([1, 1, 0, 0]))
        both_perfect = (curve.sensitivity == 1.0) & (curve.specificity == 1.0)
        assert both_perfect.any()

    def test_boundary_thresholds(self):
        scores, labels = [0.3, 0.7, 0.5], [0, 1, 1]
        curve = roc_curve(as_records(scores), as_labels(labels))
        # t=0: everything predicted positive
        assert curve.thresholds[-1] == 0.0
        assert curve.sensitivity[-1] == 1.0
        assert curve.specificity[-1] == 0.0
        # t=1: positive only for scores exactly 1
        assert curve.thresholds[0] == 1.0
        assert curve.sensitivity[0] == 0.0
        assert curve.specificity[0] == 1.0

    def test_all_tied_scores(self):
        curve = roc_curve(as_records([0.5] * 6), as_labels([1, 0, 1, 0, 1, 0]))
        for t, sens, spec in curve.points():
            if t <= 0.5:
                assert (sens, spec) == (1.0, 0.0)
            else:
                assert (sens, spec) == (0.0, 1.0)

    def test_monotonicity_invariants(self):
        rng = np.random.default_rng(2024)
        for _ in range(200):
            scores, labels = random_instance(rng, quantize=False)
            curve = roc_curve_arrays(scores, labels)
            assert np.all(np.diff(curve.thresholds) < 0)
            assert np.all(np.diff(curve.sensitivity) >= 0)
            assert np.all(np.diff(1.0 - curve.specificity) >= 0)
            assert np.all((curve.sensitivity >= 0) & (curve.sensitivity <= 1))
            assert np.all((curve.specificity >= 0) & (curve.specificity <= 1))

    def test_degenerate_labels_rejected(self):
        with pytest.raises(DegenerateLabels):
            roc_curve(as_records([0.2, 0.4]), as_labels([1, 1]))

    def test_rates_match_direct_counting(self):
        rng = np.random.default_rng(7)
        scores, labels = random_instance(rng)
        curve = roc_curve_arrays(scores, labels)
        for i in (0, 57, 121, 199):
            sens, spec = rates_at_threshold(scores, labels, curve.thresholds[i])
            assert curve.sensitivity[i] == sens
            assert curve.specificity[i] == spec


class TestAuc:
    def test_perfect_separation(self):
        curve = roc_curve(as_records([0.9, 0.8, 0.2, 0.1]), as_labels([1, 1, 0, 0]))
        assert auc(curve) == pytest.approx(1.0, abs=1e-12)

    def test_matches_concordance_oracle_small_instances(self):
        rng = np.random.default_rng(99)
        for _ in range(300):
            scores, labels = random_instance(rng)
            estimate = auc(roc_curve_arrays(scores, labels))
            exact = concordance_auc(scores, labels)
            assert abs(estimate - exact) <= 0.02

    def test_uninformative_scores_near_half(self):
        rng = np.random.default_rng(5)
        scores = rng.random(1000)
        labels = rng.integers(0, 2, 1000)
        estimate = auc(roc_curve_arrays(scores, labels))
        assert abs(estimate - 0.5) <= 0.05
        assert estimate == pytest.approx(concordance_auc(scores, labels), abs=0.01)

    def test_finer_grid_shrinks_gap_on_continuous_scores(self):
        rng = np.random.default_rng(41)
        gaps_200, gaps_10001 = [], []
        for _ in range(200):
            scores, labels = random_instance(rng, quantize=False)
            exact = concordance_auc(scores, labels)
            gaps_200.append(abs(auc(roc_curve_arrays(scores, labels, 200)) - exact))
            gaps_10001.append(abs(auc(roc_curve_arrays(scores, labels, 10001)) - exact))
        assert np.mean(gaps_10001) < np.mean(gaps_200)
        assert np.percentile(gaps_10001, 99) < 2e-3

    def test_score_order_invariance(self):
        # strictly increasing transforms keep concordance fixed; the
        # 200-threshold estimate moves only within tolerance
        rng = np.random.default_rng(17)
        transforms = [
            lambda s: s**2,
            lambda s: np.sqrt(s),
            lambda s: 1.0 / (1.0 + np.exp(-4.0 * (s - 0.5))),
        ]
        for _ in range(50):
            n = int(rng.integers(20, 51))
            labels = np.clip(rng.integers(0, 2, n), 0, 1)
            if labels.sum() in (0, n):
                labels[0], labels[-1] = 1, 0
            scores = rng.random(n)
            base_exact = concordance_auc(scores, labels)
            base_est = auc(roc_curve_arrays(scores, labels))
            for tf in transforms:
                mapped = tf(scores)
                mapped = (mapped - mapped.min()) / (mapped.max() - mapped.min() + 1e-12)
                assert concordance_auc(mapped, labels) == pytest.approx(base_exact, abs=1e-12)
                assert abs(auc(roc_curve_arrays(mapped, labels)) - base_est) <= 0.02


class TestOperatingPoints:
    def test_perfect_curve_yields_perfect_point(self):
        preds = as_records([0.9, 0.8, 0.2, 0.1])
        labels = as_labels([1, 1, 0, 0])
        curve = roc_curve(preds, labels)
        for mode in OperatingMode:
            pt = select_operating_point(curve, preds, labels, mode)
            assert pt.sensitivity == 1.0 and pt.specificity == 1.0
            assert pt.constraint_met

    def test_all_tied_high_sensitivity_point(self):
        preds = as_records([0.5] * 6)
        labels = as_labels([1, 0, 1, 0, 1, 0])
        curve = roc_curve(preds, labels)
        pt = select_operating_point(
            curve, preds, labels, OperatingMode.HIGH_SENSITIVITY, 0.95
        )
        assert pt.sensitivity == 1.0 and pt.specificity == 0.0
        assert pt.threshold <= 0.5

    def test_matches_exhaustive_search(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            scores, labels = random_instance(rng, max_n=40)
            preds, lab = as_records(scores), as_labels(labels)
            curve = roc_curve(preds, lab)
            for mode, constraint in (
                (OperatingMode.HIGH_SENSITIVITY, 0.9),
                (OperatingMode.HIGH_SPECIFICITY, 0.9),
            ):
                pt = select_operating_point(curve, preds, lab, mode, constraint)
                # brute force over the 200 curve points
                best = None
                for t, sens, spec in curve.points():
                    constrained, objective = (
                        (sens, spec) if mode == OperatingMode.HIGH_SENSITIVITY else (spec, sens)
                    )
                    if constrained >= constraint and (best is None or objective > best[1]):
                        best = (t, objective)
                if best is not None:
                    assert pt.constraint_met
                    achieved = (
                        pt.specificity if mode == OperatingMode.HIGH_SENSITIVITY else pt.sensitivity
                    )
                    assert achieved == pytest.approx(best[1], abs=1e-12)
                else:
                    assert not pt.constraint_met

    def test_self_consistency_recompute_from_threshold(self):
        rng = np.random.default_rng(8)
        scores, labels = random_instance(rng)
        preds, lab = as_records(scores), as_labels(labels)
        curve = roc_curve(preds, lab)
        for mode in OperatingMode:
            pt = select_operating_point(curve, preds, lab, mode)
            sens, spec = rates_at_threshold(scores, labels, pt.threshold)
            assert pt.sensitivity == sens
            assert pt.specificity == spec


class TestEnsembleMean:
    def test_two_members_arithmetic(self):
        fused = ensemble_mean([as_records([0.2], "a"), as_records([0.4], "b")])
        assert len(fused) == 1
        assert fused[0].score == pytest.approx(0.3)

    def test_identical_members_idempotent(self):
        rng = np.random.default_rng(3)
        scores = rng.random(20)
        members = [as_records(scores, f"m{k}") for k in range(7)]
        fused = ensemble_mean(members)
        for f, p in zip(fused, sorted(members[0], key=lambda r: r.image_id)):
            assert f.score == p.score

    def test_permutation_invariance(self):
        rng = np.random.default_rng(4)
        members = [as_records(rng.random(15), f"m{k}") for k in range(5)]
        a = ensemble_mean(members)
        b = ensemble_mean(members[::-1])
        assert [(r.image_id, r.score) for r in a] == [(r.image_id, r.score) for r in b]

    def test_mismatched_coverage_rejected(self):
        with pytest.raises(MismatchedCoverage):
            ensemble_mean([as_records([0.1, 0.2]), as_records([0.3])])

    def test_fusion_beats_median_member_on_noisy_simulations(self):
        # simulated members: shared signal, independent noise
        rng = np.random.default_rng(11)
        wins = 0
        reps = 10
        for _ in range(reps):
            n = 200
            labels = rng.integers(0, 2, n)
            while labels.sum() in (0, n):
                labels = rng.integers(0, 2, n)
            signal = labels + rng.normal(0, 0.8, n)
            members = []
            for k in range(10):
                noisy = signal + rng.normal(0, 0.8, n)
                s = 1.0 / (1.0 + np.exp(-noisy))
                members.append(as_records(s, f"m{k}"))
            lab = as_labels(labels)
            member_aucs = [
                auc(roc_curve(m, lab)) for m in members
            ]
            fused_auc = auc(roc_curve(ensemble_mean(members), lab))
            if fused_auc >= np.median(member_aucs):
                wins += 1
        assert wins >= 9


class TestReports:
    def test_build_report_fields(self):
        rng = np.random.default_rng(21)
        scores, labels = random_instance(rng, max_n=40)
        report, curve = build_report(
            "synthetic_test", as_records(scores), as_labels(labels),
            normalization="symmetric_range", ensemble_size=3,
        )
        assert 0.0 <= report.auc <= 1.0
        assert report.n_images == len(scores)
        assert report.ensemble_size == 3
        assert set(report.operating_points) == {"high_sensitivity", "high_specificity"}
        assert len(curve.thresholds) == 200

    def test_report_roundtrip_json_dict(self):
        rng = np.random.default_rng(22)
        scores, labels = random_instance(rng, max_n=30)
        report, _ = build_report(
            "t", as_records(scores), as_labels(labels), normalization="unit_range"
        )
        again = report_from_dict(report_to_dict(report))
        assert again == report

    def test_reference_table_contains_published_rows(self):
        table = format_reference_table()
        assert "0.94 (0.99)" in table
        assert "0.80 (0.99)" in table
        assert "0.91 (0.99)" in table
        assert "0.76 (0.99)" in table
        assert "0.86 (0.99)" in table
        assert "0.75 (0.99)" in table
        assert "89.9 (97.5)% sens." in table
        assert "90.1 (98.1)% spec." in table

    def test_reference_constants_pinned(self):
        assert REFERENCE_RESULTS[("symmetric_range", "kaggle_eyepacs_test")]["auc"] == 0.94
        assert REFERENCE_RESULTS[("symmetric_range", "messidor2")]["auc"] == 0.80
        assert REFERENCE_RESULTS[("standardize", "kaggle_eyepacs_test")]["auc"] == 0.91
        assert REFERENCE_RESULTS[("standardize", "messidor2")]["auc"] == 0.76
        assert REFERENCE_RESULTS[("unit_range", "kaggle_eyepacs_test")]["auc"] == 0.86
        assert REFERENCE_RESULTS[("unit_range", "messidor2")]["auc"] == 0.75

    def test_predictions_csv_roundtrip(self, tmp_path):
        preds = as_records([0.125, 0.5, 0.875])
        path = tmp_path / "p.csv"
        write_predictions_csv(preds, path)
        assert read_predictions_csv(path) == preds
