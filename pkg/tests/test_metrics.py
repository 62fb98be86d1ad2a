import itertools

import numpy as np
import pytest

from hrvbold.errors import ValidationError
from hrvbold.metrics import (ScanEvaluation, compare_configs,
                             dtw, evaluate_scan, mae, mse, paired_test,
                             pearson, spearman, variability_accuracy_analysis)
from hrvbold.seeding import make_rng


def dtw_brute_force(x, y):
    """Minimum cost over every monotone alignment path, by enumeration."""
    best = [np.inf]

    def walk(i, j, cost):
        cost += abs(x[i] - y[j])
        if cost >= best[0]:
            return
        if i == len(x) - 1 and j == len(y) - 1:
            best[0] = cost
            return
        if i + 1 < len(x):
            walk(i + 1, j, cost)
        if j + 1 < len(y):
            walk(i, j + 1, cost)
        if i + 1 < len(x) and j + 1 < len(y):
            walk(i + 1, j + 1, cost)

    walk(0, 0, 0.0)
    return best[0]


def signed_rank_brute_force(diffs):
    """Exact two-sided p by enumerating every sign assignment."""
    from scipy.stats import rankdata
    nz = np.asarray([d for d in diffs if d != 0], dtype=float)
    ranks = rankdata(np.abs(nz))
    w_obs = ranks[nz > 0].sum()
    n = len(nz)
    stats = []
    for signs in itertools.product([0, 1], repeat=n):
        stats.append(sum(r for s, r in zip(signs, ranks) if s))
    stats = np.array(stats)
    p_low = np.mean(stats <= w_obs + 1e-12)
    p_high = np.mean(stats >= w_obs - 1e-12)
    return min(1.0, 2.0 * min(p_low, p_high))


class TestBasicMetrics:
    def test_mae_examples(self):
        assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert mae([1.0, 2.0], [0.0, 0.0]) == 1.5

    def test_mse_examples(self):
        assert mse([1.0, 2.0], [1.0, 2.0]) == 0.0
        assert mse([1.0, 2.0], [0.0, 0.0]) == 2.5

    def test_against_independent_summation(self):
        rng = make_rng(1, 11)
        for _ in range(20):
            n = int(rng.integers(1, 40))
            p = rng.normal(size=n)
            t = rng.normal(size=n)
            mae_ref = sum(abs(a - b) for a, b in zip(p, t)) / n
            mse_ref = sum((a - b) ** 2 for a, b in zip(p, t)) / n
            assert mae(p, t) == pytest.approx(mae_ref, abs=1e-12)
            assert mse(p, t) == pytest.approx(mse_ref, abs=1e-12)

    def test_constant_deviation_jensen_equality(self):
        # |dev| constant: mse equals mae squared exactly
        t = np.array([1.0, 2.0, 3.0, 4.0])
        p = t + np.array([0.5, -0.5, 0.5, -0.5])
        assert mse(p, t) == pytest.approx(mae(p, t) ** 2, abs=1e-15)

    def test_length_mismatch_and_empty(self):
        with pytest.raises(ValidationError):
            mae([1.0], [1.0, 2.0])
        with pytest.raises(ValidationError):
            mse([], [])


class TestPearson:
    def test_self_correlation_is_one(self):
        x = np.array([1.0, 3.0, 2.0, 5.0])
        assert pearson(x, x) == pytest.approx(1.0, abs=1e-15)

    def test_affine_equivariance_exact(self):
        # values chosen so every float operation is exact
        x = np.array([1.0, 2.0, 4.0, 7.0, 0.0, 3.0, 5.0, 2.0])
        y = np.array([2.0, 1.0, 3.0, 8.0, 1.0, 0.0, 6.0, 4.0])
        base = pearson(x, y)
        for a in (2.0, -4.0, 0.5):
            assert pearson(a * x, y) == np.sign(a) * base
        assert pearson(2.0 * x + 0.25, y) == base

    def test_affine_equivariance_general(self):
        rng = make_rng(2, 12)
        x = rng.normal(size=30)
        y = rng.normal(size=30)
        base = pearson(x, y)
        for a, b in ((3.7, -1.2), (-0.01, 5.0)):
            assert pearson(a * x + b, y) == pytest.approx(np.sign(a) * base,
                                                          abs=1e-12)

    def test_constant_series_undefined(self):
        assert pearson(np.ones(5), np.arange(5.0)) is None
        assert pearson(np.arange(5.0), np.ones(5)) is None

    def test_spearman_is_rank_pearson(self):
        x = np.array([1.0, 10.0, 100.0, 1000.0])
        y = np.array([0.1, 0.2, 0.35, 0.4])
        assert spearman(x, y) == pytest.approx(1.0, abs=1e-15)


class TestDtw:
    def test_identity_is_zero(self):
        x = np.array([0.2, 0.5, 0.1])
        assert dtw(x, x) == 0.0

    def test_single_cell(self):
        assert dtw([0.0], [3.0]) == 3.0

    def test_warping_absorbs_repeats(self):
        assert dtw([1.0, 2.0, 3.0], [1.0, 2.0, 2.0, 3.0]) == 0.0

    def test_symmetry(self):
        rng = make_rng(3, 13)
        for _ in range(30):
            x = rng.normal(size=int(rng.integers(1, 12)))
            y = rng.normal(size=int(rng.integers(1, 12)))
            assert dtw(x, y) == pytest.approx(dtw(y, x), abs=1e-12)

    def test_diagonal_path_upper_bound(self):
        rng = make_rng(4, 14)
        for _ in range(30):
            n = int(rng.integers(1, 20))
            x = rng.normal(size=n)
            y = rng.normal(size=n)
            assert dtw(x, y) <= np.sum(np.abs(x - y)) + 1e-12

    def test_matches_brute_force_small(self):
        rng = make_rng(5, 15)
        for _ in range(200):
            nx = int(rng.integers(1, 7))
            ny = int(rng.integers(1, 7))
            x = rng.integers(0, 10, size=nx).astype(float)
            y = rng.integers(0, 10, size=ny).astype(float)
            assert dtw(x, y) == dtw_brute_force(x, y)

    def test_empty_rejected(self):
        with pytest.raises(ValidationError):
            dtw([], [1.0])


class TestEvaluateScan:
    def test_perfect_prediction(self):
        truth = np.array([0.1, 0.2, 0.3, 0.25])
        ev = evaluate_scan("s", truth.copy(), truth)
        assert (ev.mae, ev.mse, ev.pearson_r, ev.dtw) == (0.0, 0.0, 1.0, 0.0)
        assert ev.hrv_std == pytest.approx(float(np.std(truth)))

    def test_constant_shift(self):
        truth = np.linspace(0.1, 0.5, 20)
        pred = truth + 0.1
        ev = evaluate_scan("s", pred, truth)
        assert ev.mae == pytest.approx(0.1, abs=1e-12)
        assert ev.mse == pytest.approx(0.01, abs=1e-12)
        assert ev.pearson_r == pytest.approx(1.0, abs=1e-12)
        assert ev.dtw <= 0.1 * len(truth) + 1e-12

    def test_nan_frames_excluded(self):
        truth = np.linspace(0.1, 0.5, 30)
        pred = np.full(30, np.nan)
        pred[9:20] = truth[9:20]
        ev = evaluate_scan("s", pred, truth)
        assert ev.n_frames == 11
        assert ev.mae == 0.0

    def test_no_overlap_rejected(self):
        with pytest.raises(ValidationError, match="overlap"):
            evaluate_scan("s", np.full(5, np.nan), np.ones(5))


class TestVariabilityAnalysis:
    def make_eval(self, sid, std, r):
        return ScanEvaluation(scan_id=sid, mae=0.0, mse=0.0, pearson_r=r,
                              dtw=0.0, hrv_std=std, n_frames=10)

    def test_positive_relationship_detected(self):
        rng = make_rng(6, 16)
        evals = []
        for i in range(20):
            std = 0.01 + 0.002 * i
            r = np.clip(0.2 + 30.0 * std + 0.05 * rng.normal(), -1, 1)
            evals.append(self.make_eval(f"s{i}", std, float(r)))
        out = variability_accuracy_analysis(evals)
        assert out.slope > 0
        assert out.spearman_corr > 0
        assert out.n_used == 20

    def test_identical_stds_flagged_undefined(self):
        evals = [self.make_eval(f"s{i}", 0.01, 0.1 * i) for i in range(5)]
        out = variability_accuracy_analysis(evals)
        assert out.pearson_corr is None

    def test_fewer_than_three_rejected(self):
        evals = [self.make_eval("a", 0.01, 0.5), self.make_eval("b", 0.02, 0.6)]
        with pytest.raises(ValidationError):
            variability_accuracy_analysis(evals)

    def test_undefined_r_excluded_and_counted(self):
        evals = [self.make_eval(f"s{i}", 0.01 * (i + 1), 0.1 * i)
                 for i in range(4)]
        evals.append(self.make_eval("s9", 0.5, None))
        out = variability_accuracy_analysis(evals)
        assert out.n_used == 4
        assert out.n_excluded == 1


class TestPairedTest:
    def test_identical_gives_p_one(self):
        a = np.arange(10, dtype=float)
        res = paired_test(a, a.copy())
        assert res.p_value == 1.0
        assert res.direction == "none"

    def test_constant_shift_exact_tail(self):
        rng = make_rng(7, 17)
        for n in (6, 8, 10, 12):
            a = rng.normal(size=n)
            res = paired_test(a, a + 1.0)
            assert res.p_value == pytest.approx(2.0 / 2 ** n, abs=1e-12)
            assert res.direction == "b_greater"

    def test_matches_sign_flip_enumeration(self):
        rng = make_rng(8, 18)
        for _ in range(60):
            n = int(rng.integers(6, 13))
            a = rng.normal(size=n)
            b = rng.normal(size=n)
            ours = paired_test(a, b)
            brute = signed_rank_brute_force(a - b)
            assert ours.method == "exact"
            assert ours.p_value == pytest.approx(brute, abs=1e-10)

    def test_matches_scipy_exact(self):
        from scipy.stats import wilcoxon
        rng = make_rng(9, 19)
        for _ in range(20):
            n = int(rng.integers(6, 20))
            a = rng.normal(size=n)
            b = rng.normal(size=n)
            ours = paired_test(a, b)
            ref = wilcoxon(a, b, alternative="two-sided", method="exact")
            assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    def test_normal_approximation_above_exact_cutoff(self):
        from scipy.stats import wilcoxon
        rng = make_rng(10, 20)
        a = rng.normal(size=60)
        b = a + rng.normal(size=60) * 0.5 + 0.2
        ours = paired_test(a, b)
        assert ours.method == "normal"
        ref = wilcoxon(a, b, alternative="two-sided", method="approx",
                       correction=True)
        assert ours.p_value == pytest.approx(ref.pvalue, rel=0.05)

    def test_short_input_rejected(self):
        with pytest.raises(ValidationError):
            paired_test([1.0] * 5, [2.0] * 5)


class TestCompareConfigs:
    def make_evals(self, label_r, scan_ids):
        out = {}
        for label, rs in label_r.items():
            out[label] = [ScanEvaluation(scan_id=s, mae=0.1, mse=0.02,
                                         pearson_r=r, dtw=1.0, hrv_std=0.01,
                                         n_frames=50)
                          for s, r in zip(scan_ids, rs)]
        return out

    def test_identical_configs_zero_improvement_p_one(self):
        ids = [f"s{i}" for i in range(8)]
        rs = [0.5 + 0.02 * i for i in range(8)]
        comp = compare_configs(self.make_evals({"A": rs, "B": rs}, ids))
        assert comp.improvement_pct == {"A": 0.0, "B": 0.0}
        assert comp.p_matrix[("A", "B")].p_value == 1.0

    def test_improvement_formula(self):
        ids = [f"s{i}" for i in range(8)]
        comp = compare_configs(self.make_evals(
            {"best": [0.54] * 8, "other": [0.50] * 8}, ids))
        assert comp.best_label == "best"
        assert comp.improvement_pct["other"] == pytest.approx(8.0, abs=1e-9)

    def test_scan_set_mismatch_rejected(self):
        a = self.make_evals({"A": [0.5] * 4}, [f"s{i}" for i in range(4)])
        b = self.make_evals({"B": [0.5] * 4}, [f"x{i}" for i in range(4)])
        with pytest.raises(ValidationError):
            compare_configs({"A": a["A"], "B": b["B"]})

    def test_permutation_invariance(self):
        ids = [f"s{i}" for i in range(10)]
        rng = make_rng(11, 21)
        rs_a = list(rng.uniform(0.2, 0.9, 10))
        rs_b = list(rng.uniform(0.2, 0.9, 10))
        evals = self.make_evals({"A": rs_a, "B": rs_b}, ids)
        shuffled = {k: list(reversed(v)) for k, v in evals.items()}
        c1 = compare_configs(evals)
        c2 = compare_configs(shuffled)
        assert c1.summary == c2.summary
        assert c1.p_matrix[("A", "B")].p_value == \
            c2.p_matrix[("A", "B")].p_value

    def test_undefined_r_excluded_from_aggregates(self):
        ids = [f"s{i}" for i in range(6)]
        evals = self.make_evals({"A": [0.5, 0.6, None, 0.7, 0.6, 0.5],
                                 "B": [0.4] * 6}, ids)
        comp = compare_configs(evals)
        assert comp.summary["A"]["pearson_r"]["n_excluded"] == 1
        assert comp.summary["A"]["pearson_r"]["mean"] == \
            pytest.approx(np.mean([0.5, 0.6, 0.7, 0.6, 0.5]))
