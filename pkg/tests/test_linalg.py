import numpy as np
import pytest
import scipy.sparse
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vradmm.linalg import (
    NotPositiveDefiniteError,
    RankDeficientError,
    SparseMatrix,
    factor_spd,
    gram,
    power_iteration,
    sigma_a,
    solve_spd,
    spectral_norm_sq,
    spmv,
    spmv_transpose,
)

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


def dense_matrices(max_rows=8, max_cols=8):
    return st.tuples(st.integers(1, max_rows), st.integers(1, max_cols)).flatmap(
        lambda s: arrays(np.float64, s, elements=finite))


class TestSparseMatrix:
    def test_identity(self):
        I = SparseMatrix.identity(4)
        np.testing.assert_array_equal(I.to_dense(), np.eye(4))
        assert I.nnz == 4

    def test_rejects_unsorted_columns(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            SparseMatrix(1, 3, [0, 2], [2, 0], [1.0, 1.0])

    def test_rejects_bad_offsets(self):
        with pytest.raises(ValueError, match="row_offsets"):
            SparseMatrix(2, 2, [1, 1, 2], [0, 1], [1.0, 1.0])
        with pytest.raises(ValueError, match="monotone"):
            SparseMatrix(2, 2, [0, 2, 1], [0, 1], [1.0, 1.0])

    def test_rejects_out_of_range_column(self):
        with pytest.raises(ValueError, match="out of range"):
            SparseMatrix(1, 2, [0, 1], [2], [1.0])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="non-finite"):
            SparseMatrix(1, 1, [0, 1], [0], [np.nan])

    def test_arrays_are_read_only(self):
        A = SparseMatrix.identity(2)
        with pytest.raises(ValueError):
            A.values[0] = 5.0

    def test_vstack(self):
        A = SparseMatrix.from_dense([[1.0, -1.0]])
        B = A.vstack(SparseMatrix.identity(2))
        np.testing.assert_array_equal(B.to_dense(), [[1, -1], [1, 0], [0, 1]])
        with pytest.raises(ValueError):
            A.vstack(SparseMatrix.identity(3))

    def test_zeros(self):
        Z = SparseMatrix.zeros(3, 2)
        assert Z.nnz == 0 and Z.shape == (3, 2)

    @given(dense_matrices())
    def test_dense_round_trip(self, M):
        np.testing.assert_array_equal(SparseMatrix.from_dense(M).to_dense(), M)

    def test_from_scipy_sums_duplicates(self):
        S = scipy.sparse.coo_matrix(([1.0, 2.0], ([0, 0], [1, 1])), shape=(1, 2))
        np.testing.assert_array_equal(SparseMatrix.from_scipy(S).to_dense(), [[0.0, 3.0]])


@given(dense_matrices(), st.data())
def test_matvecs_match_dense(M, data):
    A = SparseMatrix.from_dense(M)
    x = data.draw(arrays(np.float64, M.shape[1], elements=finite))
    u = data.draw(arrays(np.float64, M.shape[0], elements=finite))
    np.testing.assert_allclose(spmv(A, x), M @ x, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose(spmv_transpose(A, u), M.T @ u, rtol=1e-12, atol=1e-12)


def test_matvec_dimension_check():
    with pytest.raises(ValueError):
        spmv(SparseMatrix.identity(3), np.ones(2))


@given(dense_matrices())
def test_gram_matches_dense(M):
    G = gram(SparseMatrix.from_dense(M))
    np.testing.assert_allclose(G, M.T @ M, rtol=1e-12, atol=1e-10)
    np.testing.assert_array_equal(G, G.T)


class TestCholesky:
    def test_solves(self, rng):
        B = rng.standard_normal((6, 6))
        M = B @ B.T + 6 * np.eye(6)
        F = factor_spd(M)
        assert F.reconstruction_error(M) < 1e-14
        b = rng.standard_normal(6)
        np.testing.assert_allclose(M @ solve_spd(F, b), b, atol=1e-12)
        np.testing.assert_allclose(F.solve(b), np.linalg.solve(M, b), atol=1e-12)

    def test_indefinite_reports_pivot(self):
        M = np.diag([1.0, 2.0, -1.0])
        with pytest.raises(NotPositiveDefiniteError) as e:
            factor_spd(M)
        assert e.value.pivot == 2

    def test_semidefinite_rejected(self):
        M = np.array([[1.0, 1.0], [1.0, 1.0]])
        with pytest.raises(NotPositiveDefiniteError):
            factor_spd(M)

    def test_asymmetric_rejected(self):
        with pytest.raises(ValueError, match="symmetric"):
            factor_spd(np.array([[2.0, 1.0], [0.0, 2.0]]))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            solve_spd(factor_spd(np.eye(3)), np.ones(2))


class TestSpectral:
    def test_power_iteration_diag(self):
        est = power_iteration(lambda v: np.array([3.0, 1.0, 0.5]) * v, 3, rtol=1e-12)
        assert est.value == pytest.approx(3.0, rel=1e-10)
        assert not est.flagged

    @given(dense_matrices(6, 5))
    def test_norm_matches_svd(self, M):
        ref = np.linalg.norm(M, 2) ** 2
        est = spectral_norm_sq(SparseMatrix.from_dense(M), rtol=1e-12)
        if ref == 0:
            assert est.value == 0 and est.flagged
        elif not est.flagged:
            assert est.value == pytest.approx(ref, rel=1e-6)

    def test_graph_guided_norm(self):
        # A = [e0 - e1; I]: A^T A = [[2,-1],[-1,2]], lambda_max = 3
        A = SparseMatrix.from_dense([[1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        assert spectral_norm_sq(A, rtol=1e-12).value == pytest.approx(3.0, rel=1e-9)

    def test_sigma_a_tall_uses_column_gram(self):
        A = SparseMatrix.from_dense([[1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        assert sigma_a(A) == pytest.approx(1.0, rel=1e-8)

    def test_sigma_a_wide_uses_row_gram(self):
        M = np.array([[1.0, 2.0, 0.0], [0.0, 1.0, 1.0]])
        ref = np.linalg.eigvalsh(M @ M.T).min()
        assert sigma_a(M) == pytest.approx(ref, rel=1e-8)

    def test_sigma_a_rank_deficient(self):
        with pytest.raises(RankDeficientError, match="sigma_A = 0"):
            sigma_a(np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]]))

    @given(st.integers(0, 10_000))
    def test_sigma_a_matches_eigvalsh(self, seed):
        r = np.random.default_rng(seed)
        M = r.standard_normal((r.integers(2, 7), 3))
        ref = np.linalg.eigvalsh(M.T @ M).min()
        if ref < 1e-6:
            return
        assert sigma_a(M) == pytest.approx(ref, rel=1e-6)
