import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctwillems.errors import DimensionError
from ctwillems.linalg import (
    as_matrix,
    eigenvalues,
    matrix_exponential,
    numerical_rank,
    pseudoinverse,
    svd,
)
from oracles import charpoly, durand_kerner, normal_equations_pinv, svd_rank, taylor_expm


def penrose_errors(M, P):
    def rel(a, b):
        return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)

    return (
        rel(M @ P @ M, M),
        rel(P @ M @ P, P),
        rel((M @ P).T, M @ P),
        rel((P @ M).T, P @ M),
    )


class TestMatrix:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            as_matrix([[1.0, np.nan]])

    def test_rejects_empty(self):
        with pytest.raises(DimensionError):
            as_matrix(np.zeros((0, 3)))

    def test_svd_orthonormal(self):
        M = np.random.default_rng(0).normal(size=(4, 6))
        res = svd(M)
        assert np.all(np.diff(res.singular_values) <= 0)
        assert np.allclose(res.left_vectors.T @ res.left_vectors, np.eye(4), atol=1e-12)
        assert np.allclose(res.right_vectors.T @ res.right_vectors, np.eye(4), atol=1e-12)


class TestMatrixExponential:
    def test_zero_is_identity(self):
        assert np.allclose(matrix_exponential(np.zeros((2, 2)), 1.0), np.eye(2), rtol=0, atol=1e-15)

    @pytest.mark.parametrize("T", [0.1, 1.0, 7.5])
    def test_nilpotent(self, T):
        E = matrix_exponential([[0.0, 1.0], [0.0, 0.0]], T)
        assert np.allclose(E, [[1.0, T], [0.0, 1.0]], rtol=1e-14, atol=1e-15)

    def test_scalar(self):
        assert matrix_exponential([[-1.0]], 1.0)[0, 0] == pytest.approx(0.36787944117144233, rel=1e-15)

    def test_frozen_taylor_value(self):
        # Expected from the order-30 Taylor oracle.
        A = np.array([[0.3, -0.7], [0.5, 0.1]])
        expected = np.array([[1.1130119521280686, -0.38135325762175704], [0.2723951840155408, 1.0040538785218522]])
        assert np.allclose(matrix_exponential(A, 0.5), expected, rtol=0, atol=1e-14)

    def test_random_vs_taylor(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            A = rng.uniform(-1, 1, size=(4, 4))
            assert np.max(np.abs(matrix_exponential(A, 0.5) - taylor_expm(A, 0.5))) <= 1e-11

    def test_non_square(self):
        with pytest.raises(DimensionError):
            matrix_exponential(np.ones((2, 3)), 1.0)

    def test_relative_accuracy_up_to_norm_50(self):
        mpmath = pytest.importorskip("mpmath")
        mpmath.mp.dps = 40
        rng = np.random.default_rng(6)
        for _ in range(25):
            A = rng.uniform(-1, 1, (4, 4))
            A *= rng.uniform(0.5, 50.0) / np.linalg.norm(A, 2)
            ref = np.array(mpmath.expm(mpmath.matrix(A.tolist())).tolist(), dtype=float)
            assert np.linalg.norm(matrix_exponential(A) - ref) <= 1e-12 * np.linalg.norm(ref)

    def test_subnormal_time(self):
        A = np.random.default_rng(0).uniform(-1, 1, (3, 3))
        assert np.allclose(matrix_exponential(A, 5e-324), np.eye(3), rtol=0, atol=1e-15)

    def test_negative_time_is_inverse(self):
        A = np.random.default_rng(2).uniform(-1, 1, (3, 3))
        assert np.allclose(matrix_exponential(A, 0.7) @ matrix_exponential(A, -0.7), np.eye(3), atol=1e-13)

    @settings(max_examples=40, deadline=None)
    @given(
        seed=st.integers(0, 2**31 - 1),
        s=st.floats(-2.0, 2.0),
        t=st.floats(-2.0, 2.0),
    )
    def test_semigroup(self, seed, s, t):
        A = np.random.default_rng(seed).uniform(-1, 1, (3, 3))
        A *= 2.5 / max(np.linalg.norm(A, 2), 1e-12)  # ||A|| (|s|+|t|) <= 10
        lhs = matrix_exponential(A, s) @ matrix_exponential(A, t)
        rhs = matrix_exponential(A, s + t)
        # Entries reach e^10; the bound is relative to the entry scale.
        assert np.max(np.abs(lhs - rhs)) <= 1e-10 * max(1.0, np.max(np.abs(rhs)))

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), t=st.floats(-3.0, 3.0))
    def test_nonsingular(self, seed, t):
        A = np.random.default_rng(seed).uniform(-1, 1, (3, 3))
        assert numerical_rank(matrix_exponential(A, t)) == 3


class TestPseudoinverse:
    def test_identity(self):
        assert np.allclose(pseudoinverse(np.eye(3)), np.eye(3))

    def test_diagonal_cutoff(self):
        assert np.array_equal(pseudoinverse([[2.0, 0.0], [0.0, 0.0]]), [[0.5, 0.0], [0.0, 0.0]])

    def test_full_row_rank_right_inverse(self):
        M = np.random.default_rng(3).normal(size=(3, 7))
        P = pseudoinverse(M)
        assert np.allclose(M @ P, np.eye(3), atol=1e-9)
        assert np.allclose(P, normal_equations_pinv(M), atol=1e-9)

    @pytest.mark.parametrize("shape,rank", [((3, 7), 3), ((7, 3), 3), ((6, 6), 2), ((5, 8), 4)])
    def test_penrose_identities(self, shape, rank):
        rng = np.random.default_rng(sum(shape) + rank)
        M = rng.normal(size=(shape[0], rank)) @ rng.normal(size=(rank, shape[1]))
        assert max(penrose_errors(M, pseudoinverse(M))) <= 1e-9

    def test_bad_cutoff(self):
        with pytest.raises(ValueError):
            pseudoinverse(np.eye(2), cutoff_rel=0.0)


class TestNumericalRank:
    def test_zero(self):
        assert numerical_rank(np.zeros((3, 5))) == 0

    def test_identity(self):
        assert numerical_rank(np.eye(4)) == 4

    def test_outer_product(self):
        rng = np.random.default_rng(4)
        M = np.outer(rng.normal(size=5), rng.normal(size=5))
        assert svd_rank(M) == 1
        assert numerical_rank(M) == 1

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), r=st.integers(1, 4), scale=st.floats(1e-3, 1e3))
    def test_invariances(self, seed, r, scale):
        rng = np.random.default_rng(seed)
        M = rng.normal(size=(5, r)) @ rng.normal(size=(r, 6))
        base = numerical_rank(M)
        assert base == r
        assert numerical_rank(M[rng.permutation(5)][:, rng.permutation(6)]) == base
        assert numerical_rank(-scale * M) == base


class TestEigenvalues:
    def test_diagonal(self):
        assert sorted(eigenvalues(np.diag([1.0, -2.0])).real) == [-2.0, 1.0]

    def test_rotation(self):
        lam = eigenvalues([[0.0, -1.0], [1.0, 0.0]])
        assert np.allclose(sorted(lam, key=lambda z: z.imag), [-1j, 1j], atol=1e-12)

    def test_frozen_symmetric(self):
        # Expected from Faddeev-LeVerrier + Durand-Kerner.
        S = np.array([[2.0, 1, 0, 0], [1, 3, 1, 0], [0, 1, 4, 1], [0, 0, 1, 5]])
        expected = [1.2547187598258607, 2.822717080887107, 4.177282919112885, 5.7452812401741475]
        assert np.allclose(np.sort(eigenvalues(S).real), expected, atol=1e-9)

    def test_random_symmetric_vs_polynomial_roots(self):
        rng = np.random.default_rng(5)
        for _ in range(5):
            X = rng.uniform(-1, 1, (4, 4))
            S = X + X.T
            ours = np.sort(eigenvalues(S).real)
            ref = np.sort(durand_kerner(charpoly(S)).real)
            assert np.allclose(ours, ref, atol=1e-8)

    def test_size_limit(self):
        with pytest.raises(DimensionError):
            eigenvalues(np.eye(17))
