import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from probiter.exceptions import NotDiagonalizableError, NotPositiveDefiniteError
from probiter.numerics import (
    mahalanobis_sq,
    operator_norm,
    rank_decomposition,
    real_jordan_factor,
    spectral_radius,
    sqrt_factor,
    weighted_norm,
    whiten,
)

from conftest import random_spd


class TestSpectralRadius:
    def test_identity(self):
        assert spectral_radius(np.eye(2)) == 1.0

    def test_diagonal(self):
        assert spectral_radius(np.diag([0.5, -0.5])) == pytest.approx(0.5)

    def test_companion_golden_ratio(self):
        # roots of z^2 - z - 1 from the quadratic formula
        oracle = (1 + np.sqrt(5)) / 2
        C = np.array([[1.0, 1.0], [1.0, 0.0]])
        assert spectral_radius(C) == pytest.approx(oracle, abs=1e-10)
        assert spectral_radius(C) == pytest.approx(1.6180339887, abs=1e-10)


class TestOperatorNorm:
    def test_diag_two_norm(self):
        assert operator_norm(np.diag([3.0, 1.0])) == pytest.approx(3.0)

    @pytest.mark.parametrize("d", [1, 4, 9])
    def test_identity_frobenius(self, d):
        assert operator_norm(np.eye(d), "frobenius") == pytest.approx(np.sqrt(d))

    def test_nilpotent(self):
        # 2x2 SVD by hand: M'M = diag(0, 4)
        M = np.array([[0.0, 2.0], [0.0, 0.0]])
        assert operator_norm(M) == pytest.approx(2.0)

    def test_unknown_norm(self):
        with pytest.raises(ValueError):
            operator_norm(np.eye(2), "nuclear")


class TestWeightedNorm:
    def test_unit(self):
        assert weighted_norm(np.array([1.0, 0.0]), np.eye(2)) == pytest.approx(1.0)

    def test_diag(self):
        assert weighted_norm(np.array([1.0, 1.0]), np.diag([4.0, 9.0])) == pytest.approx(np.sqrt(13))

    def test_zero(self):
        assert weighted_norm(np.zeros(3), np.eye(3)) == 0.0

    def test_not_spd(self):
        with pytest.raises(NotPositiveDefiniteError):
            weighted_norm(np.ones(2), np.diag([1.0, -1.0]))


class TestSqrtFactor:
    def test_identity_canonical(self):
        f = sqrt_factor(np.eye(4))
        np.testing.assert_array_equal(f.factor, np.eye(4))

    def test_diag(self):
        M = np.diag([4.0, 9.0])
        np.testing.assert_allclose(sqrt_factor(M).gram, M, atol=1e-14)

    def test_rank_one(self):
        v = np.array([1.0, 2.0])
        M = np.outer(v, v)
        f = sqrt_factor(M)
        np.testing.assert_allclose(f.gram, M, atol=1e-12)
        assert np.linalg.matrix_rank(f.factor, tol=1e-8) == 1

    def test_indefinite_raises(self):
        with pytest.raises(NotPositiveDefiniteError):
            sqrt_factor(np.diag([1.0, -0.5]))

    @settings(max_examples=30, deadline=None)
    @given(d=st.integers(1, 8), seed=st.integers(0, 2**31 - 1))
    def test_gram_property(self, d, seed):
        M = random_spd(np.random.default_rng(seed), d, cond=1e4)
        f = sqrt_factor(M)
        np.testing.assert_allclose(f.gram, M, atol=1e-10 * np.linalg.norm(M))

    def test_whiten_matches_mahalanobis(self, rng):
        M = random_spd(rng, 6)
        v = rng.standard_normal(6)
        w = whiten(sqrt_factor(M), v)
        assert w @ w == pytest.approx(mahalanobis_sq(M, v), rel=1e-10)
        assert w @ w == pytest.approx(v @ np.linalg.solve(M, v), rel=1e-10)


class TestRankDecomposition:
    def test_identity(self):
        dec = rank_decomposition(np.eye(3))
        assert dec.rank == 3 and dec.kernel_basis.shape == (3, 0)

    def test_zero(self):
        dec = rank_decomposition(np.zeros((3, 3)))
        assert dec.rank == 0 and dec.range_basis.shape == (3, 0)

    def test_diag(self):
        dec = rank_decomposition(np.diag([1.0, 0.0]))
        assert dec.rank == 1
        np.testing.assert_allclose(np.abs(dec.range_basis[:, 0]), [1.0, 0.0])
        np.testing.assert_allclose(np.abs(dec.kernel_basis[:, 0]), [0.0, 1.0])

    @settings(max_examples=25, deadline=None)
    @given(d=st.integers(2, 7), data=st.data())
    def test_bases_orthonormal_complement(self, d, data):
        r = data.draw(st.integers(0, d))
        rng = np.random.default_rng(data.draw(st.integers(0, 2**31 - 1)))
        F = rng.standard_normal((d, r))
        dec = rank_decomposition(F @ F.T)
        assert dec.rank == r
        Q = np.hstack([dec.range_basis, dec.kernel_basis])
        np.testing.assert_allclose(Q.T @ Q, np.eye(d), atol=1e-10)


class TestRealJordanFactor:
    def test_diag_with_zero(self):
        J = real_jordan_factor(np.diag([2.0, 0.0]))
        assert J.rank == 1
        np.testing.assert_allclose(J.Omega11, [[2.0]])
        np.testing.assert_allclose(np.abs(J.Y1[:, 0]) / np.linalg.norm(J.Y1), [1.0, 0.0])
        np.testing.assert_allclose(np.abs(J.W2[:, 0]) / np.linalg.norm(J.W2), [0.0, 1.0])

    def test_rotation_block(self):
        a, b = 0.6, 0.3
        G = np.array([[a, b], [-b, a]])
        J = real_jordan_factor(G)
        assert J.rank == 2
        np.testing.assert_allclose(J.Omega11, G, atol=1e-12)
        np.testing.assert_allclose(J.reconstruct(), G, atol=1e-12)

    def test_round_trip(self, rng):
        Y = np.eye(3) + 0.3 * rng.standard_normal((3, 3))
        G = Y @ np.diag([3.0, 0.5, 0.0]) @ np.linalg.inv(Y)
        J = real_jordan_factor(G)
        assert J.rank == 2
        assert np.linalg.norm(J.reconstruct() - G) <= 1e-8
        np.testing.assert_allclose(J.W.T @ J.Y, np.eye(3), atol=1e-8)
        np.testing.assert_allclose(J.W2.T @ G, 0.0, atol=1e-10)

    def test_jordan_block_rejected(self):
        with pytest.raises(NotDiagonalizableError):
            real_jordan_factor(np.array([[1.0, 1.0], [0.0, 1.0]]))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), d=st.integers(3, 7))
    def test_random_singular_round_trip(self, seed, d):
        rng = np.random.default_rng(seed)
        Y = np.eye(d) + 0.2 * rng.standard_normal((d, d))
        lam = np.concatenate([rng.uniform(0.2, 0.9, d - 2), [0.0, 0.0]])
        G = Y @ np.diag(lam) @ np.linalg.inv(Y)
        J = real_jordan_factor(G)
        assert J.rank == d - 2
        assert np.linalg.norm(J.reconstruct() - G) <= 1e-8 * max(1.0, np.linalg.norm(G))
