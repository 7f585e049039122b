import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from presto import binned_calibration_mse, brier_score, paired_t_test_one_tailed, rare_prob_mse
from presto.evaluation import equal_frequency_bins


class TestRareProbMse:
    def test_identity(self):
        x = np.array([0.1, 0.2, 0.3])
        assert rare_prob_mse(x, x) == 0.0

    def test_shift(self):
        x = np.linspace(0, 0.5, 11)
        assert rare_prob_mse(x + 0.01, x) == pytest.approx(1e-4, rel=1e-12)

    def test_symmetry(self, rng):
        a, b = rng.random(20), rng.random(20)
        assert rare_prob_mse(a, b) == rare_prob_mse(b, a)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            rare_prob_mse([0.1], [0.1, 0.2])


class TestBinnedCalibration:
    def test_hand_case(self):
        assert abs(binned_calibration_mse([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1], bins=2) - 0.025) <= 1e-12

    def test_perfect(self):
        est = np.r_[np.full(5, 0.2), np.full(5, 0.6)]
        lab = np.r_[[1, 0, 0, 0, 0], [1, 1, 1, 0, 0]]
        assert binned_calibration_mse(est, lab, bins=2) == pytest.approx(0.0, abs=1e-15)

    def test_bin_sizes(self):
        assert list(np.bincount(equal_frequency_bins(23, 10))) == [3, 3, 3, 2, 2, 2, 2, 2, 2, 2]

    def test_brute_force(self, rng):
        for _ in range(20):
            m = int(rng.integers(10, 60))
            est = np.round(rng.random(m), 1)  # plenty of ties
            lab = (rng.random(m) < est).astype(float)
            order = sorted(range(m), key=lambda i: (est[i], i))
            sizes = [m // 10 + (1 if b < m % 10 else 0) for b in range(10)]
            total, pos = 0.0, 0
            for s in sizes:
                idx = order[pos:pos + s]
                rate = sum(lab[i] for i in idx) / s
                total += sum((est[i] - rate) ** 2 for i in idx)
                pos += s
            assert binned_calibration_mse(est, lab) == pytest.approx(total / m, abs=1e-15)

    def test_order_invariance(self, rng):
        est = rng.random(50)
        lab = (rng.random(50) < 0.3).astype(float)
        perm = rng.permutation(50)
        assert binned_calibration_mse(est[perm], lab[perm]) == pytest.approx(binned_calibration_mse(est, lab), abs=1e-15)

    def test_too_few(self):
        with pytest.raises(ValueError):
            binned_calibration_mse([0.1, 0.2], [0, 1], bins=10)


class TestBrier:
    def test_hand_case(self):
        # (0.5^2 + 0.3^2 + 0.2^2 + 0.1^2 + 0.1^2 + 0.2^2) / 2
        P = np.array([[0.5, 0.3, 0.2], [0.1, 0.1, 0.8]])
        assert abs(brier_score(P, [1, 3]) - 0.22) <= 1e-12

    def test_brute_force(self, rng):
        for _ in range(20):
            m, K = int(rng.integers(1, 30)), int(rng.integers(2, 6))
            P = rng.dirichlet(np.ones(K), size=m)
            y = rng.integers(1, K + 1, m)
            total = sum((float(y[i] == k + 1) - P[i, k]) ** 2 for i in range(m) for k in range(K))
            assert brier_score(P, y) == pytest.approx(total / m, abs=1e-14)

    def test_perfect_and_uniform(self):
        assert brier_score(np.eye(3), [1, 2, 3]) == 0.0
        assert brier_score(np.full((4, 2), 0.5), [1, 2, 2, 1]) == pytest.approx(0.5)

    def test_invalid_rows(self):
        with pytest.raises(ValueError):
            brier_score(np.array([[0.5, 0.6]]), [1])
        with pytest.raises(ValueError):
            brier_score(np.array([[0.5, 0.5]]), [3])

    def test_noise_never_helps_in_expectation(self):
        # Brier is proper: under labels drawn from P, a blurred forecast Q scores no better
        worse = 0
        for seed in range(100):
            r = np.random.default_rng(seed)
            P = r.dirichlet(np.ones(3), size=200)
            Q = np.clip(P + r.normal(scale=0.05, size=P.shape), 1e-6, None)
            Q /= Q.sum(axis=1, keepdims=True)
            expected = lambda F: np.mean(np.sum(P * ((1 - F) ** 2 + (F ** 2).sum(1, keepdims=True) - F ** 2), axis=1))
            worse += expected(Q) >= expected(P)
        assert worse == 100


class TestPairedT:
    def test_equal_samples(self, rng):
        a = rng.random(10)
        assert paired_t_test_one_tailed(a, a.copy()) == 0.5

    def test_constant_shift(self, rng):
        b = rng.random(100)
        assert paired_t_test_one_tailed(b - 1, b) == 0.0
        assert paired_t_test_one_tailed(b + 1, b) == 1.0

    def test_strong_effect(self, rng):
        b = rng.random(100)
        a = b - 1 + rng.normal(scale=0.1, size=100)
        assert paired_t_test_one_tailed(a, b) < 1e-10

    def test_matches_scipy(self, rng):
        a, b = rng.normal(size=15), rng.normal(size=15)
        ref = stats.ttest_rel(a, b, alternative="less").pvalue
        assert paired_t_test_one_tailed(a, b) == pytest.approx(ref, rel=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 100_000), st.integers(2, 40))
    def test_symmetry(self, seed, r):
        g = np.random.default_rng(seed)
        a, b = g.normal(size=r), g.normal(size=r)
        assert abs(paired_t_test_one_tailed(a, b) + paired_t_test_one_tailed(b, a) - 1.0) <= 1e-12

    def test_too_short(self):
        with pytest.raises(ValueError):
            paired_t_test_one_tailed([1.0], [2.0])
