import numpy as np
import pytest
from scipy import stats

from probiter.calibration import (
    KernelSpec,
    bootstrap_null,
    median_heuristic,
    mmd2_unbiased,
    q_value,
    range_kernel_oracle,
    singular_calibration_check,
    sq_exp_kernel,
    two_sample_report,
    weak_calibration_test,
    whitened_residual,
    z_statistic,
)
from probiter.exceptions import DegenerateBandwidthError, NotPositiveDefiniteError, ParameterError
from probiter.lifting import GaussianBelief, push_gaussian_stationary
from probiter.methods import AffineIteration, LinearSystem, richardson

from conftest import random_spd


def consistent_mean(G, x0, x_star, m):
    f = x_star - G @ x_star
    x = x0.copy()
    for _ in range(m):
        x = G @ x + f
    return x


class TestWhitenedResidual:
    def test_at_mean(self):
        b = GaussianBelief(np.ones(3), 2.0 * np.eye(3))
        np.testing.assert_array_equal(whitened_residual(b, np.ones(3)), 0.0)

    def test_scaled_identity(self):
        b = GaussianBelief(np.zeros(4), 4.0 * np.eye(4))
        w = whitened_residual(b, np.array([2.0, 0.0, 0.0, 0.0]))
        assert np.linalg.norm(w) == pytest.approx(1.0, abs=1e-15)

    def test_singular_rejected(self):
        with pytest.raises(NotPositiveDefiniteError):
            whitened_residual(GaussianBelief(np.zeros(2), np.diag([1.0, 0.0])), np.ones(2))

    def test_invariance_nonsingular(self, rng):
        d, m = 6, 7
        A = random_spd(rng, d, 5.0)
        # omega = 0.1 keeps eig(G) in [0.5, 0.9], so Sigma_m stays well conditioned
        it = richardson(LinearSystem(A, rng.standard_normal(d)), 0.1)
        mu0 = GaussianBelief(rng.standard_normal(d), random_spd(rng, d, 4.0))
        cov_m = push_gaussian_stationary(AffineIteration(it.G, np.zeros(d)), mu0, m).cov
        for _ in range(5):
            x_star = rng.standard_normal(d)
            xm = consistent_mean(it.G, mu0.mean, x_star, m)
            lhs = np.linalg.norm(whitened_residual(GaussianBelief(xm, cov_m), x_star))
            rhs = np.linalg.norm(whitened_residual(mu0, x_star))
            assert lhs == pytest.approx(rhs, rel=1e-8)


class TestZStatistic:
    def test_at_mean(self):
        assert z_statistic(GaussianBelief(np.zeros(2), np.eye(2)), np.zeros(2)) == 0.0

    def test_scaling(self, rng):
        S = random_spd(rng, 3)
        x = rng.standard_normal(3)
        z1 = z_statistic(GaussianBelief(np.zeros(3), S), x)
        z4 = z_statistic(GaussianBelief(np.zeros(3), 4.0 * S), x)
        assert z4 == pytest.approx(z1 / 4.0, rel=1e-12)

    def test_chi_squared_mean(self, rng):
        d, n = 5, 10_000
        b = GaussianBelief(rng.standard_normal(d), random_spd(rng, d))
        z = z_statistic(b, b.sample(n, seed=2))
        assert abs(z.mean() - d) <= 5 * np.sqrt(2 * d / n)


class TestSingularCheck:
    def test_full_rank_reduces(self, rng):
        S = random_spd(rng, 4)
        b = GaussianBelief(np.zeros(4), S)
        x = rng.standard_normal(4)
        diag = singular_calibration_check(b, x)
        assert diag.rank == 4 and diag.null_residual_norm == 0.0
        assert diag.z_statistic == pytest.approx(z_statistic(b, x), rel=1e-10)

    def test_at_mean(self):
        b = GaussianBelief(np.ones(3), np.diag([1.0, 2.0, 0.0]))
        diag = singular_calibration_check(b, np.ones(3))
        np.testing.assert_array_equal(diag.whitened_range, 0.0)
        assert diag.null_residual_norm == 0.0 and diag.z_statistic == 0.0

    def test_constructed_singular_method(self, rng):
        d, m, n = 5, 3, 10_000
        Y = np.eye(d) + 0.2 * rng.standard_normal((d, d))
        G = Y @ np.diag([0.8, -0.5, 0.3, 0.0, 0.0]) @ np.linalg.inv(Y)
        mu0 = GaussianBelief(np.zeros(d), np.eye(d))
        cov_m = push_gaussian_stationary(AffineIteration(G, np.zeros(d)), mu0, m).cov
        X = mu0.sample(n, seed=6)
        Gm = np.linalg.matrix_power(G, m)
        Xm = X @ (np.eye(d) - Gm).T  # x0 = 0, f = (I - G) X
        diag = singular_calibration_check(GaussianBelief(np.zeros(d), cov_m), X - Xm)
        assert diag.rank == 3
        assert np.all(diag.null_residual_norm <= 1e-8 * np.linalg.norm(X, axis=1))
        assert abs(diag.z_statistic.mean() - 3) <= 5 * np.sqrt(2 * 3 / n)


class TestRangeKernelOracle:
    def test_nonsingular(self, rng):
        d = 4
        sys_ = LinearSystem(random_spd(rng, d, 3.0), rng.standard_normal(d))
        it = richardson(sys_, 0.4)
        res = range_kernel_oracle(it.G, GaussianBelief(np.zeros(d), np.eye(d)), sys_, 5)
        assert res["rank"] == d and res["null_residual"] == 0.0
        assert max(res["range_residual"], res["norm_residual"], res["whitening_residual"]) <= 1e-8

    def test_diag_half_zero(self):
        sys_ = LinearSystem(np.eye(2), np.array([1.0, -2.0]))
        res = range_kernel_oracle(np.diag([0.5, 0.0]), GaussianBelief(np.zeros(2), np.eye(2)), sys_, 3)
        assert res["rank"] == 1 and res["null_residual"] <= 1e-8

    def test_random_rank_deficient(self, rng):
        d, r = 6, 4
        sys_ = LinearSystem(random_spd(rng, d), rng.standard_normal(d))
        worst = 0.0
        for _ in range(100):
            Y = np.eye(d) + 0.2 * rng.standard_normal((d, d))
            lam = np.concatenate([rng.uniform(0.3, 0.9, r) * rng.choice([-1, 1], r), np.zeros(d - r)])
            G = Y @ np.diag(lam) @ np.linalg.inv(Y)
            mu0 = GaussianBelief(rng.standard_normal(d), random_spd(rng, d, 3.0))
            res = range_kernel_oracle(G, mu0, sys_, 4)
            assert res["rank"] == r
            worst = max(worst, *(res[k] for k in ("range_residual", "norm_residual",
                                                  "whitening_residual", "null_residual",
                                                  "reconstruction_residual")))
        assert worst <= 1e-6


class TestKernel:
    def test_same_point(self):
        assert sq_exp_kernel(np.ones(3), np.ones(3), 0.5) == 1.0

    def test_one_length_scale_apart(self):
        assert sq_exp_kernel(np.array([0.0, 0.0]), np.array([0.0, 0.7]), 0.7) == \
            pytest.approx(np.exp(-0.5), abs=1e-15)
        assert np.exp(-0.5) == pytest.approx(0.60653066, abs=1e-8)

    def test_wide_limit(self):
        assert sq_exp_kernel(0.0, 5.0, 1e8) == pytest.approx(1.0)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            KernelSpec(0.0)


class TestMedianHeuristic:
    def test_two_points(self):
        assert median_heuristic(np.array([[0.0], [1.0]])) == pytest.approx(np.sqrt(0.5))

    def test_translation_invariant(self, rng):
        X, Y = rng.standard_normal((20, 3)), rng.standard_normal((20, 3))
        assert median_heuristic(X + 4.0, Y + 4.0) == pytest.approx(median_heuristic(X, Y), rel=1e-12)

    def test_stable_across_seeds(self):
        ells = [median_heuristic(np.random.default_rng(s).standard_normal((200, 2))) for s in range(20)]
        ref = 1.1774  # sqrt(median of chi^2_2 scaled by 2, halved): sqrt(2 ln 2)
        assert ref == pytest.approx(np.sqrt(2 * np.log(2)), abs=1e-4)
        assert all(abs(e / ref - 1.0) <= 0.2 for e in ells)

    def test_degenerate(self):
        with pytest.raises(DegenerateBandwidthError):
            median_heuristic(np.zeros((5, 2)))


class TestMMD:
    def test_identical_samples_zero(self, rng):
        X = rng.standard_normal((30, 2))
        assert mmd2_unbiased(X, X.copy(), KernelSpec(0.8)) == 0.0

    def test_two_point_example(self):
        val = mmd2_unbiased(np.array([[0.0], [0.0]]), np.array([[1.0], [1.0]]), KernelSpec(1.0))
        assert val == pytest.approx(2 - 2 * np.exp(-0.5), abs=1e-12)
        assert val == pytest.approx(0.78693868, abs=1e-8)

    def test_unbiased(self):
        rng = np.random.default_rng(1)
        vals = np.array([mmd2_unbiased(rng.standard_normal((20, 1)), rng.standard_normal((20, 1)),
                                       KernelSpec(1.0)) for _ in range(10_000)])
        assert abs(vals.mean()) <= 5 * vals.std() / np.sqrt(vals.size)

    def test_bootstrap_deterministic(self, rng):
        X, Y = rng.standard_normal((15, 2)), rng.standard_normal((15, 2))
        a, ta = bootstrap_null(X, Y, KernelSpec(1.0), 200, seed=5)
        b, tb = bootstrap_null(X, Y, KernelSpec(1.0), 200, seed=5)
        np.testing.assert_array_equal(a, b)
        assert ta == tb

    def test_bootstrap_needs_100(self, rng):
        with pytest.raises(ParameterError):
            bootstrap_null(np.zeros((3, 1)), np.ones((3, 1)), 1.0, M=50)

    def test_q_value(self):
        null = np.arange(10.0)
        assert q_value(4.0, null) == pytest.approx(0.5)
        assert q_value(100.0, null) == 0.0
        assert q_value(-1.0, null) == 1.0

    def test_power(self):
        rejects = 0
        for s in range(30):
            rng = np.random.default_rng(s)
            rep = two_sample_report(rng.standard_normal((100, 1)), 3 + rng.standard_normal((100, 1)),
                                    M=200, seed=s)
            rejects += rep.reject
        assert rejects == 30

    def test_report_json(self, rng):
        rep = two_sample_report(rng.standard_normal((10, 1)), rng.standard_normal((10, 1)), M=100)
        doc = rep.to_json_dict()
        assert set(doc) >= {"mmd2", "bootstrap_samples", "threshold", "q", "reject"}
        assert len(doc["bootstrap_samples"]) == 100


class TestWeakCalibration:
    def setup_method(self):
        rng = np.random.default_rng(0)
        self.sys = LinearSystem(random_spd(rng, 5, 10.0), rng.standard_normal(5))
        self.mu0 = GaussianBelief(np.zeros(5), np.eye(5))

    def test_m0_non_rejection_rate(self):
        q = [weak_calibration_test("richardson-default", self.mu0, self.sys, m=0, N=50, M=200,
                                   seed=s).q for s in range(40)]
        rate = np.mean(np.array(q) > 0.05)
        lo = stats.binom.ppf(0.005, 40, 0.95) / 40
        assert rate >= lo

    def test_stationary_richardson_passes(self):
        q = [weak_calibration_test("richardson-optimal", self.mu0, self.sys, m=10, N=100, M=200,
                                   seed=s).q for s in range(10)]
        assert np.mean(np.array(q) > 0.05) >= 0.8

    def test_shrunk_covariance_rejected(self):
        rep = weak_calibration_test("richardson-default", self.mu0, self.sys, m=1, N=100, M=200,
                                    seed=0, cov_scale=1e-4)
        assert rep.q < 0.05 and rep.reject

    def test_fixed_seed_reproducible(self):
        a = weak_calibration_test("cg", self.mu0, self.sys, m=2, N=30, M=100, seed=3)
        b = weak_calibration_test("cg", self.mu0, self.sys, m=2, N=30, M=100, seed=3)
        assert a.mmd2 == b.mmd2 and a.q == b.q
        np.testing.assert_array_equal(a.bootstrap_samples, b.bootstrap_samples)
