import itertools
import math

import numpy as np
import pytest

from covrepair.errors import InvalidAlpha, InvalidN, TooFewCalibrationLabels
from covrepair.quality import (
    CalibrationSample,
    EvaluationBatch,
    SimulatedEvaluator,
    batch_accept_probability,
    calibrate_p,
    p_value_lower_tail,
    quality_test,
    t_statistic,
)

from oracles import t_cdf


class TestCalibrateP:
    def test_typical_sample(self):
        labels = [True] * 86 + [False] * 14
        assert calibrate_p(CalibrationSample(labels)) == pytest.approx(0.86)

    def test_all_positive_clamped(self):
        assert calibrate_p(CalibrationSample([True] * 40)) == pytest.approx(1 - 1e-6)

    def test_half(self):
        labels = [True] * 20 + [False] * 20
        assert calibrate_p(CalibrationSample(labels)) == pytest.approx(0.5)

    def test_too_few(self):
        with pytest.raises(TooFewCalibrationLabels):
            calibrate_p(CalibrationSample([True] * 29))
        # configurable floor
        assert calibrate_p(CalibrationSample([True] * 10), min_labels=10) == pytest.approx(1 - 1e-6)


class TestTStatistic:
    def test_null_exactly(self):
        assert t_statistic(0.86, 0.2, 5, 0.86) == 0.0

    def test_worked_example(self):
        labels = [1, 1, 1, 0, 0]
        m = np.mean(labels)
        s = np.std(labels, ddof=1)
        t = t_statistic(m, s, 5, 0.86)
        assert t == pytest.approx(-1.06145, abs=1e-4)
        assert s == pytest.approx(0.547723, abs=1e-6)

    def test_zero_variance_positive(self):
        assert t_statistic(1.0, 0.0, 5, 0.86) == math.inf
        assert t_statistic(0.86, 0.0, 5, 0.86) == math.inf

    def test_zero_variance_negative(self):
        assert t_statistic(0.0, 0.0, 5, 0.86) == -math.inf

    def test_invalid_n(self):
        with pytest.raises(InvalidN):
            t_statistic(0.5, 0.1, 1, 0.8)


class TestPValueLowerTail:
    def test_zero_is_half(self):
        for df in (1, 2, 4, 11, 30):
            assert p_value_lower_tail(0.0, df) == pytest.approx(0.5)

    def test_infinities(self):
        assert p_value_lower_tail(-math.inf, 4) == 0.0
        assert p_value_lower_tail(math.inf, 4) == 1.0

    def test_worked_example(self):
        assert p_value_lower_tail(-1.06145, 4) == pytest.approx(0.174, abs=2e-3)

    def test_matches_continued_fraction_oracle(self):
        ts = [-8.0, -3.2, -1.5, -0.7, -0.05, 0.0, 0.3, 1.1, 2.6, 6.5]
        dfs = [1, 2, 3, 4, 7, 15, 40, 120]
        for t in ts:
            for df in dfs:
                assert p_value_lower_tail(t, df) == pytest.approx(
                    t_cdf(t, df), abs=1e-6
                )

    def test_symmetry(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            t = float(rng.standard_normal() * 3)
            df = int(rng.integers(1, 60))
            assert p_value_lower_tail(t, df) + p_value_lower_tail(-t, df) == pytest.approx(
                1.0, abs=1e-9
            )

    def test_strictly_increasing_in_t(self):
        for df in (1, 4, 20):
            grid = np.linspace(-4, 4, 41)
            vals = [p_value_lower_tail(t, df) for t in grid]
            assert all(b > a for a, b in zip(vals, vals[1:]))


class TestQualityTest:
    def test_worked_example_accepts(self):
        batch = EvaluationBatch("g1", [True, True, True, False, False])
        verdict = quality_test(batch, p=0.86, alpha=0.1)
        assert verdict.accept
        assert verdict.p_value == pytest.approx(0.174, abs=2e-3)

    def test_all_false_rejected_at_any_alpha(self):
        batch = EvaluationBatch("g2", [False] * 5)
        for alpha in (1e-6, 0.1, 0.4, 0.5):
            assert not quality_test(batch, p=0.86, alpha=alpha).accept

    def test_all_true_accepted(self):
        batch = EvaluationBatch("g3", [True] * 5)
        for alpha in (0.1, 0.4, 0.5):
            assert quality_test(batch, p=0.86, alpha=alpha).accept

    def test_reject_iff_p_below_alpha(self):
        batch = EvaluationBatch("g4", [True, False, False, False, True])
        verdict = quality_test(batch, p=0.86, alpha=0.1)
        assert (not verdict.accept) == (verdict.p_value < 0.1)

    def test_invalid_alpha(self):
        batch = EvaluationBatch("g5", [True, False])
        for alpha in (0.0, -0.1, 0.6, 1.0):
            with pytest.raises(InvalidAlpha):
                quality_test(batch, p=0.8, alpha=alpha)

    def test_invalid_n(self):
        with pytest.raises(InvalidN):
            quality_test(EvaluationBatch("g6", [True]), p=0.8, alpha=0.1)

    def test_stricter_alpha_accept_containment(self):
        # batches accepted at the stricter alpha=0.4 are accepted at 0.1
        for n in range(2, 9):
            for labels in itertools.product([False, True], repeat=n):
                batch = EvaluationBatch("x", list(labels))
                strict = quality_test(batch, p=0.86, alpha=0.4).accept
                lax = quality_test(batch, p=0.86, alpha=0.1).accept
                if strict:
                    assert lax

    def test_p_value_nondecreasing_in_mean(self):
        # raising the number of positive labels never lowers the p-value
        for n in (4, 5, 6):
            prev = -1.0
            for k in range(n + 1):
                batch = EvaluationBatch("m", [True] * k + [False] * (n - k))
                verdict = quality_test(batch, p=0.7, alpha=0.1)
                assert verdict.p_value >= prev
                prev = verdict.p_value


class TestSimulatedEvaluator:
    def test_flat_probability(self):
        ev = SimulatedEvaluator(0.75)
        rng = np.random.default_rng(0)
        labels = ev.evaluate(10_000, rng)
        assert np.mean(labels) == pytest.approx(0.75, abs=0.02)

    def test_keyed_probabilities(self):
        ev = SimulatedEvaluator({"linucb": 0.9, "default": 0.5})
        assert ev.prob_for("linucb") == 0.9
        assert ev.prob_for("random_guide") == 0.5
        assert ev.prob_for(["linucb:arm0", "linucb"]) == 0.9

    def test_accept_probability_enumeration(self):
        # direct enumeration: with p=0.86, alpha=0.1, N=5, at least three
        # positive labels are needed
        got = batch_accept_probability(5, 0.86, 0.1, q=0.5)
        expect = sum(
            math.comb(5, k) * 0.5**5 for k in range(3, 6)
        )
        assert got == pytest.approx(expect, abs=1e-12)
