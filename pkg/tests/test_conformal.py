import math

import numpy as np
import pytest
from scipy.special import erf

from divbound.conformal import (CalibrationRecord, calibrate_plain,
                                calibrate_shift, conformal_index,
                                conformal_quantile, gap_estimate,
                                mondrian_select, tv_numeric, verify_lemma1,
                                verify_theorem1)
from divbound.shiftmodel import fit_shift
from test_shiftmodel import _fake_features, _records


def rec(score, ordinal=1.0, features=None, cid="c", mid="m"):
    return CalibrationRecord(circuit_id=cid, machine_id=mid,
                             ordinal=ordinal, score=score, features=features)


def gaussian_tv(delta):
    """Closed-form TV between N(0,1) and N(delta,1)."""
    return float(erf(abs(delta) / (2.0 * math.sqrt(2.0))))


class TestConformalQuantile:
    def test_ten_scores(self):
        assert conformal_quantile(range(1, 11), 0.1) == 10.0

    def test_sentinel_boundary(self):
        assert conformal_quantile(range(1, 10), 0.1) == 9.0
        assert conformal_quantile(range(1, 9), 0.1) == math.inf
        assert conformal_quantile(range(1, 9), 0.1, "lower") == -math.inf

    def test_constant_scores(self):
        for alpha in (0.1, 0.3, 0.5):
            assert conformal_quantile([2.0] * 20, alpha) == 2.0

    def test_lower_direction(self):
        assert conformal_quantile(range(1, 11), 0.1, "lower") == 1.0

    def test_index_matches_sort_reimplementation(self, rng):
        for _ in range(300):
            n = int(rng.integers(1, 1001))
            alpha = float(rng.uniform(0.01, 0.5))
            scores = rng.normal(size=n)
            rank = math.ceil((1.0 - alpha) * (n + 1))
            assert conformal_index(n, alpha) == rank
            got = conformal_quantile(scores, alpha)
            if rank > n:
                assert got == math.inf
            else:
                assert got == sorted(scores)[rank - 1]

    def test_validation(self):
        with pytest.raises(ValueError):
            conformal_quantile([], 0.1)
        with pytest.raises(ValueError):
            conformal_quantile([1.0], 1.5)
        with pytest.raises(ValueError):
            conformal_quantile([1.0], 0.1, "sideways")


class TestCalibratePlain:
    def test_single_record(self):
        b = calibrate_plain([rec(0.3)], 0.5)
        assert b.bound == 0.3
        assert b.n_cal_used == 1
        assert not b.infeasible

    def test_adding_larger_score_never_decreases(self, rng):
        scores = list(rng.uniform(size=30))
        before = calibrate_plain([rec(s) for s in scores], 0.1).bound
        after = calibrate_plain([rec(s) for s in scores + [2.0]], 0.1).bound
        assert after >= before

    def test_exchangeable_coverage(self, rng):
        hits = 0
        trials = 2000
        for _ in range(trials):
            scores = rng.normal(size=50)
            test = rng.normal()
            bound = calibrate_plain([rec(s) for s in scores], 0.1).bound
            hits += test <= bound
        assert hits / trials >= 0.88

    def test_infeasible_flag(self):
        b = calibrate_plain([rec(0.3)], 0.1)
        assert b.infeasible
        assert b.bound == math.inf


class TestMondrianSelect:
    def test_second_largest(self):
        records = [rec(0.1 * o, ordinal=o) for o in (5, 7, 9, 11, 13)
                   for _ in range(3)]
        sel = mondrian_select(records, "second_largest")
        assert sel.s_min == 11.0
        assert all(r.ordinal == 11.0 for r in sel.kept)
        assert not sel.warning

    def test_single_ordinal_warns(self):
        records = [rec(0.2, ordinal=3.0)] * 4
        sel = mondrian_select(records, "second_largest")
        assert sel.warning
        assert len(sel.kept) == 4

    def test_optimize_all_equal_keeps_all(self):
        records = [rec(0.2, ordinal=5.0)] * 6
        sel = mondrian_select(records, "optimize", test_ordinal=7.0)
        assert len(sel.kept) == 6

    def test_optimize_prefers_near_stratum(self):
        # keeping only the ordinal-10 record: gap 1/(1+1) = 0.5;
        # keeping all three: (9+9+1)/(1+3) = 4.75
        records = [rec(0.1, ordinal=1.0), rec(0.1, ordinal=1.0),
                   rec(0.5, ordinal=10.0)]
        sel = mondrian_select(records, "optimize", test_ordinal=11.0)
        assert [r.ordinal for r in sel.kept] == [10.0]

    def test_optimize_never_worse_than_keep_all(self, rng):
        for _ in range(100):
            ordinals = rng.integers(1, 8, size=12).astype(float)
            test_ord = float(rng.integers(5, 12))
            records = [rec(0.1, ordinal=o) for o in ordinals]
            sel = mondrian_select(records, "optimize", test_ordinal=test_ord)

            def objective(kept):
                gaps = sum(abs(r.ordinal - test_ord) for r in kept)
                return gaps / (1.0 + len(kept))

            assert objective(sel.kept) <= objective(records) + 1e-12

    def test_optimize_needs_test_ordinal(self):
        with pytest.raises(ValueError):
            mondrian_select([rec(0.1)], "optimize")


class TestCalibrateShift:
    def test_zero_shift_reduces_to_plain(self, rng):
        records = [rec(s) for s in rng.uniform(size=25)]
        plain = calibrate_plain(records, 0.1)
        shifted = calibrate_shift(records, None, None, 0.1)
        assert shifted.bound == plain.bound
        assert shifted.q_alpha == plain.q_alpha

    def test_perfect_model_returns_prediction(self, rng):
        # an interpolating forest has zero residuals on its own
        # training data, so the bound collapses onto g(test)
        X = rng.normal(size=(20, 3))
        y = rng.uniform(size=20)
        g = fit_shift(_records(X, y), n_trees=1, min_leaf=1,
                      feature_frac=1.0, bootstrap=False)
        records = [rec(t, features=_fake_features(x)) for x, t in zip(X, y)]
        test_f = _fake_features(X[0])
        b = calibrate_shift(records, g, test_f, 0.5)
        assert b.bound == pytest.approx(y[0], abs=1e-10)

    def test_absolute_residuals_give_clipped_interval(self, rng):
        X = rng.normal(size=(30, 2))
        y = rng.uniform(size=30)
        g = fit_shift(_records(X, y), n_trees=5, seed=0)
        records = [rec(t, features=_fake_features(x)) for x, t in zip(X, y)]
        b = calibrate_shift(records, g, _fake_features(X[1]), 0.2,
                            residual_kind="absolute")
        assert b.lower is not None
        assert b.lower >= 0.0
        assert b.lower <= b.bound

    def test_unknown_residual_kind(self):
        with pytest.raises(ValueError):
            calibrate_shift([rec(0.1)], None, None, 0.1, residual_kind="huber")


class TestTvNumeric:
    def test_identical(self):
        assert tv_numeric(("gaussian", 0.0, 1.0),
                          ("gaussian", 0.0, 1.0)) == pytest.approx(0.0, abs=1e-9)

    def test_small_shift_matches_erf(self):
        got = tv_numeric(("gaussian", 0.0, 1.0), ("gaussian", 0.1, 1.0))
        assert got == pytest.approx(gaussian_tv(0.1), abs=1e-6)

    def test_grid_density(self):
        x = np.linspace(-8.0, 8.0, 4001)
        pdf = np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)
        got = tv_numeric(("grid", x, pdf), ("gaussian", 0.3, 1.0))
        assert got == pytest.approx(gaussian_tv(0.3), abs=1e-4)

    def test_unnormalized_rejected(self):
        x = np.linspace(0.0, 1.0, 101)
        with pytest.raises(ValueError, match="unnormalized"):
            tv_numeric(("grid", x, np.full(101, 2.0)), ("gaussian", 0.0, 1.0))

    def test_devroye_sandwich(self):
        for delta in np.linspace(0.01, 1.0, 100):
            tv = tv_numeric(("gaussian", 0.0, 1.0), ("gaussian", delta, 1.0))
            assert (4.0 / 200.0) * delta <= tv + 1e-6
            assert tv <= 0.5 * delta + 1e-6


class TestGapEstimate:
    def test_identical(self):
        d = ("gaussian", 0.0, 1.0)
        assert gap_estimate([d, d], d) == pytest.approx(0.0, abs=1e-9)

    def test_mixture_linearity(self):
        test = ("gaussian", 0.0, 1.0)
        shifts = [0.1, 0.4, 0.9]
        cal = [("gaussian", s, 1.0) for s in shifts]
        expected = np.mean([gaussian_tv(s) for s in shifts])
        assert gap_estimate(cal, test) == pytest.approx(expected, abs=1e-6)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            gap_estimate([], ("gaussian", 0.0, 1.0))


class TestVerifyLemma1:
    def test_degenerate_equal_means(self):
        out = verify_lemma1(0.0, 0.0, 0.0, 10, 50)
        assert out["gap_all"] == 0.0
        assert out["gap_selected"] == 0.0
        assert out["selection_helps"]

    def test_nothing_discarded(self):
        out = verify_lemma1(0.0, 0.005, 0.01, 0, 40)
        assert out["gap_selected"] == pytest.approx(out["gap_all"], rel=0.0,
                                                    abs=1e-15)

    def test_numeric_case(self):
        out = verify_lemma1(0.0, 0.012, 0.02, 50, 100)
        # proxy: (gamma/2) weighted mean of |mean differences|
        g = 0.1
        expected_all = g * (50 * 0.02 + 50 * 0.008) / 101
        expected_sel = g * 50 * 0.008 / 51
        assert out["gap_all"] == pytest.approx(expected_all, abs=1e-12)
        assert out["gap_selected"] == pytest.approx(expected_sel, abs=1e-12)
        assert out["in_regime"]
        assert out["selection_helps"] == (out["gap_selected"]
                                          <= out["gap_all"] + 1e-15)
        assert out["gap_all_exact"] == pytest.approx(
            (50 * gaussian_tv(0.02) + 50 * gaussian_tv(0.008)) / 101, abs=1e-6)

    def test_ordering_required(self):
        with pytest.raises(ValueError):
            verify_lemma1(0.02, 0.01, 0.0, 5, 10)


class TestVerifyTheorem1:
    def test_hand_arithmetic(self):
        out = verify_theorem1(0.5, 1000, 0.1)
        assert out["C"] == pytest.approx(1.5)
        assert out["hoeffding_prob_bound"] == pytest.approx(
            2.0 * math.exp(-0.02 / 1500.0))
        span = 1.0 / math.sqrt(0.5) - math.sqrt(0.5)
        assert out["standard_prob_bound"] == pytest.approx(
            2.0 * math.exp(-2.0 * 1000 * 0.01 / span ** 2))

    def test_degenerate_c_near_one(self):
        out = verify_theorem1(1.0 - 1e-13, 100, 0.1)
        assert out["bound_factor"] == 1.0
        assert out["hoeffding_prob_bound"] == 0.0

    def test_validation(self):
        with pytest.raises(ValueError):
            verify_theorem1(1.5, 100, 0.1)
        with pytest.raises(ValueError):
            verify_theorem1(0.5, 0, 0.1)
        with pytest.raises(ValueError):
            verify_theorem1(0.5, 100, 0.0)
