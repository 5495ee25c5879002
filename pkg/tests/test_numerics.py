import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dlvkl.errors import DimensionMismatch, FactorizationFailure
from dlvkl.numerics import (
    CholFactor,
    chol_solve,
    cholesky_jitter,
    gaussian_logpdf_chol,
    logdet_chol,
    tri_solve,
)

from conftest import random_spd


class TestCholeskyJitter:
    def test_diagonal(self):
        fac = cholesky_jitter(np.diag([4.0, 9.0]), 0.0)
        np.testing.assert_array_equal(fac.lower, [[2.0, 0.0], [0.0, 3.0]])
        assert fac.jitter_used == 0.0

    def test_identity_needs_no_jitter(self):
        fac = cholesky_jitter(np.eye(3), 0.0)
        np.testing.assert_array_equal(fac.lower, np.eye(3))
        assert fac.jitter_used == 0.0

    def test_singular_gets_base_jitter(self):
        # [[1,1],[1,1]] + 1e-6 I: l00 = sqrt(1 + 1e-6)
        fac = cholesky_jitter(np.ones((2, 2)), 1e-6)
        assert fac.jitter_used == 1e-6
        assert fac.lower[0, 0] == pytest.approx(np.sqrt(1 + 1e-6), rel=1e-14)
        l10 = 1.0 / np.sqrt(1 + 1e-6)
        np.testing.assert_allclose(fac.lower[1], [l10, np.sqrt(1 + 1e-6 - l10**2)], rtol=1e-8)

    def test_default_base_scales_with_diagonal(self):
        fac = cholesky_jitter(50.0 * np.ones((3, 3)))
        assert fac.jitter_used == pytest.approx(1e-6 * 50.0)

    def test_escalates(self):
        # rank-deficient with round-off: needs more than the smallest jitter
        A = np.ones((4, 4)) - 1e-4 * np.eye(4)
        fac = cholesky_jitter(A, 1e-6)
        assert fac.jitter_used in [1e-6 * 10.0**k for k in range(6)]
        assert fac.jitter_used > 1e-6

    def test_failure_after_all_attempts(self):
        with pytest.raises(FactorizationFailure):
            cholesky_jitter(-np.eye(3), 1e-6)

    def test_non_square(self):
        with pytest.raises(DimensionMismatch):
            cholesky_jitter(np.ones((2, 3)))

    def test_strict_upper_zero(self, rng):
        fac = cholesky_jitter(random_spd(rng, 6))
        assert np.all(np.triu(fac.lower, 1) == 0.0)
        assert np.all(np.diag(fac.lower) > 0)

    @given(st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_reconstruction(self, n, seed):
        A = random_spd(np.random.default_rng(seed), n, cond=1e4)
        fac = cholesky_jitter(A)
        target = A + fac.jitter_used * np.eye(n)
        err = np.linalg.norm(fac.lower @ fac.lower.T - target) / np.linalg.norm(target)
        assert err <= 1e-8


class TestTriSolve:
    def test_identity(self, rng):
        B = rng.standard_normal((3, 2))
        np.testing.assert_array_equal(tri_solve(np.eye(3), B), B)

    def test_diagonal(self):
        np.testing.assert_allclose(tri_solve(np.diag([2.0, 3.0]), np.array([2.0, 3.0])), [1.0, 1.0])

    def test_transposed(self, rng):
        L = np.tril(rng.standard_normal((4, 4))) + 4 * np.eye(4)
        b = rng.standard_normal(4)
        np.testing.assert_allclose(L.T @ tri_solve(L, b, transposed=True), b, atol=1e-12)

    def test_row_mismatch(self):
        with pytest.raises(DimensionMismatch):
            tri_solve(np.eye(3), np.ones(2))

    def test_accepts_factor(self, rng):
        A = random_spd(rng, 3)
        fac = cholesky_jitter(A, 0.0)
        b = rng.standard_normal(3)
        x = tri_solve(fac, tri_solve(fac, b), transposed=True)
        assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-8

    @given(st.integers(1, 16), st.integers(0, 2**31 - 1))
    def test_round_trip(self, n, seed):
        r = np.random.default_rng(seed)
        A = random_spd(r, n, cond=100.0)
        b = r.standard_normal(n)
        fac = cholesky_jitter(A, 0.0)
        x = chol_solve(fac, b)
        assert np.linalg.norm(A @ x - b) / np.linalg.norm(b) <= 1e-8


class TestLogdet:
    def test_identity(self):
        assert logdet_chol(CholFactor(np.eye(4))) == 0.0

    def test_scalar(self):
        assert logdet_chol(cholesky_jitter(np.array([[4.0]]), 0.0)) == pytest.approx(np.log(4.0))

    def test_diag(self):
        got = logdet_chol(cholesky_jitter(np.diag([4.0, 9.0]), 0.0))
        assert got == pytest.approx(2 * (np.log(2) + np.log(3)), rel=1e-14)

    @given(st.integers(0, 2**31 - 1))
    def test_matches_eigenvalues(self, seed):
        A = random_spd(np.random.default_rng(seed), 4, cond=50.0)
        expected = np.sum(np.log(np.linalg.eigvalsh(A)))
        assert logdet_chol(cholesky_jitter(A, 0.0)) == pytest.approx(expected, abs=1e-8)

    def test_gaussian_logpdf(self, rng):
        from scipy.stats import multivariate_normal

        A = random_spd(rng, 3)
        y = rng.standard_normal(3)
        expected = multivariate_normal(np.zeros(3), A).logpdf(y)
        assert gaussian_logpdf_chol(y, cholesky_jitter(A, 0.0)) == pytest.approx(expected, rel=1e-10)
