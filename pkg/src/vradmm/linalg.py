"""Linear algebra primitives: compressed-row matrices, SPD solves, spectral estimates.

Sizes here are "desk scale": the number of columns is at most a few thousand,
so Gram matrices and their factors are held densely.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse

logger = logging.getLogger(__name__)

__all__ = [
    "SparseMatrix",
    "SpdFactor",
    "NotPositiveDefiniteError",
    "RankDeficientError",
    "SpectralEstimate",
    "spmv",
    "spmv_transpose",
    "gram",
    "factor_spd",
    "solve_spd",
    "spectral_norm_sq",
    "sigma_a",
    "power_iteration",
]

_START_SEED = 20161009


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Raised by :func:`factor_spd`; ``pivot`` is the 0-based failing index."""

    def __init__(self, pivot: int, value: float | None = None):
        self.pivot = pivot
        self.value = value
        msg = f"not positive definite: pivot {pivot} failed"
        if value is not None:
            msg += f" (value {value:.3e})"
        super().__init__(msg)


class RankDeficientError(ValueError):
    pass


@dataclass(frozen=True)
class SparseMatrix:
    """Compressed-row matrix.

    ``col_indices`` are strictly increasing within each row and
    ``row_offsets[-1] == nnz``.
    """

    rows: int
    cols: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        offs = np.asarray(self.row_offsets, dtype=np.int64)
        cols = np.asarray(self.col_indices, dtype=np.int64)
        vals = np.asarray(self.values, dtype=np.float64)
        if offs.shape != (self.rows + 1,) or offs[0] != 0:
            raise ValueError("row_offsets must have length rows+1 and start at 0")
        if np.any(np.diff(offs) < 0):
            raise ValueError("row_offsets must be monotone")
        if offs[-1] != cols.size or cols.size != vals.size:
            raise ValueError("nnz mismatch between offsets, indices and values")
        if cols.size and (cols.min() < 0 or cols.max() >= self.cols):
            raise ValueError("column index out of range")
        for r in range(self.rows):
            seg = cols[offs[r]:offs[r + 1]]
            if seg.size > 1 and np.any(np.diff(seg) <= 0):
                raise ValueError(f"column indices not strictly increasing in row {r}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("non-finite matrix entry")
        for name, arr in (("row_offsets", offs), ("col_indices", cols), ("values", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(
            self, "_csr",
            scipy.sparse.csr_matrix((vals, cols, offs), shape=(self.rows, self.cols)),
        )

    @property
    def shape(self) -> tuple[int, int]:
        return (self.rows, self.cols)

    @property
    def nnz(self) -> int:
        return int(self.row_offsets[-1])

    @classmethod
    def from_dense(cls, M) -> "SparseMatrix":
        M = np.atleast_2d(np.asarray(M, dtype=np.float64))
        csr = scipy.sparse.csr_matrix(M)
        csr.sort_indices()
        return cls(M.shape[0], M.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_scipy(cls, S) -> "SparseMatrix":
        csr = scipy.sparse.csr_matrix(S, dtype=np.float64, copy=True)
        csr.sum_duplicates()
        csr.sort_indices()
        return cls(csr.shape[0], csr.shape[1], csr.indptr, csr.indices, csr.data)

    @classmethod
    def identity(cls, d: int) -> "SparseMatrix":
        return cls(d, d, np.arange(d + 1), np.arange(d), np.ones(d))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "SparseMatrix":
        return cls(rows, cols, np.zeros(rows + 1, dtype=np.int64), np.zeros(0), np.zeros(0))

    def vstack(self, other: "SparseMatrix") -> "SparseMatrix":
        if other.cols != self.cols:
            raise ValueError("column counts differ")
        return SparseMatrix.from_scipy(scipy.sparse.vstack([self._csr, other._csr], format="csr"))

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        return self._csr

    def to_dense(self) -> np.ndarray:
        return self._csr.toarray()


def _as_vector(x, n: int, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != n:
        raise ValueError(f"dimension mismatch: {what} expects length {n}, got shape {x.shape}")
    return x


def spmv(A: SparseMatrix, x) -> np.ndarray:
    """``A @ x``, accumulated row by row in ascending column order."""
    x = _as_vector(x, A.cols, "spmv")
    return A.to_scipy() @ x


def spmv_transpose(A: SparseMatrix, v) -> np.ndarray:
    v = _as_vector(v, A.rows, "spmv_transpose")
    return A.to_scipy().T @ v


def gram(A: SparseMatrix) -> np.ndarray:
    """Dense ``A^T A``; exactly symmetric."""
    S = A.to_scipy()
    M = (S.T @ S).toarray()
    return (M + M.T) * 0.5


@dataclass(frozen=True)
class SpdFactor:
    lower: np.ndarray

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def solve(self, rhs) -> np.ndarray:
        return solve_spd(self, rhs)

    def reconstruction_error(self, M) -> float:
        M = np.asarray(M, dtype=np.float64)
        return float(np.linalg.norm(self.lower @ self.lower.T - M) / max(np.linalg.norm(M), 1e-300))


def factor_spd(M, min_pivot: float = 1e-12) -> SpdFactor:
    """Cholesky factor of a symmetric positive definite matrix."""
    M = np.array(M, dtype=np.float64, copy=True)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("factor_spd expects a square matrix")
    if not np.array_equal(M, M.T) and not np.allclose(M, M.T, rtol=1e-12, atol=1e-14):
        raise ValueError("factor_spd expects a symmetric matrix")
    c, info = scipy.linalg.lapack.dpotrf(M, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"dpotrf: illegal argument {-info}")
    piv = np.diag(c) ** 2
    bad = np.flatnonzero(piv <= min_pivot)
    if bad.size:
        raise NotPositiveDefiniteError(int(bad[0]), float(piv[bad[0]]))
    lower = np.tril(c)
    lower.setflags(write=False)
    return SpdFactor(lower)


def solve_spd(F: SpdFactor, rhs) -> np.ndarray:
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape[0] != F.dim:
        raise ValueError(f"dimension mismatch: factor is {F.dim}, rhs has {rhs.shape[0]}")
    x, info = scipy.linalg.lapack.dpotrs(F.lower, rhs, lower=1)
    if info != 0:
        raise ValueError(f"dpotrs failed with info={info}")
    return x


@dataclass(frozen=True)
class SpectralEstimate:
    value: float
    iterations: int
    residual: float
    flagged: bool = False

    def __float__(self) -> float:
        return self.value


def _start_vector(d: int, seed: int) -> np.ndarray:
    # all-ones start, perturbed so that it is never exactly an eigenvector
    # of structured Gram matrices (e.g. ones is an eigenvector of G^T G + I)
    rng = np.random.default_rng(seed)
    v = np.ones(d) + 0.5 * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def power_iteration(apply, d: int, *, rtol: float = 1e-8, max_iter: int | None = None,
                    seed: int = _START_SEED) -> SpectralEstimate:
    """Largest eigenvalue of a symmetric PSD operator given as a matvec.

    Stops when ``||M v - mu v|| <= rtol * mu``; for a symmetric matrix the
    Rayleigh quotient is then within ``rtol * mu`` of an eigenvalue.
    """
    if max_iter is None:
        max_iter = max(10 * d, 20000)
    v = _start_vector(d, seed)
    mu = 0.0
    res = np.inf
    for it in range(1, max_iter + 1):
        w = apply(v)
        mu = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return SpectralEstimate(0.0, it, 0.0, flagged=True)
        res = float(np.linalg.norm(w - mu * v))
        if res <= rtol * abs(mu):
            return SpectralEstimate(mu, it, res)
        v = w / nw
    logger.warning("power iteration hit max_iter=%d (residual %.2e)", max_iter, res)
    return SpectralEstimate(mu, max_iter, res, flagged=True)


def spectral_norm_sq(A, **kw) -> SpectralEstimate:
    """``lambda_max(A^T A)`` (= ``||A||_2^2``) by power iteration.

    A zero matrix returns 0 with ``flagged=True``.
    """
    if isinstance(A, SparseMatrix):
        S = A.to_scipy()
        if A.nnz == 0 or not np.any(A.values):
            return SpectralEstimate(0.0, 0, 0.0, flagged=True)
        d = A.cols
        return power_iteration(lambda v: S.T @ (S @ v), d, **kw)
    M = np.atleast_2d(np.asarray(A, dtype=np.float64))
    if not np.any(M):
        return SpectralEstimate(0.0, 0, 0.0, flagged=True)
    return power_iteration(lambda v: M.T @ (M @ v), M.shape[1], **kw)


def sigma_a(A, *, rtol: float = 1e-10, max_iter: int | None = None) -> float:
    """Smallest eigenvalue of ``A^T A`` (rows >= cols) or ``A A^T`` (rows < cols).

    Computed by power iteration on ``s I - Gram`` with ``s = lambda_max + 1``.
    For a tall matrix this substitutes ``lambda_min(A^T A)`` for
    ``lambda_min(A A^T)``, which is zero whenever rows > cols.
    """
    dense = A.to_dense() if isinstance(A, SparseMatrix) else np.atleast_2d(np.asarray(A, float))
    r, c = dense.shape
    if r >= c:
        G = dense.T @ dense
        if r > c:
            logger.warning(
                "sigma_A: A is %dx%d (rows > cols); A A^T is singular, using lambda_min(A^T A)", r, c)
    else:
        G = dense @ dense.T
    G = (G + G.T) * 0.5
    k = G.shape[0]
    if max_iter is None:
        max_iter = max(10 * k, 200000)
    top = power_iteration(lambda v: G @ v, k, rtol=rtol, max_iter=max_iter).value
    s = top + 1.0
    shifted = power_iteration(lambda v: s * v - G @ v, k, rtol=rtol * 1e-2, max_iter=max_iter)
    lo = s - shifted.value
    if lo <= 1e-12 * max(top, 1.0):
        raise RankDeficientError("sigma_A = 0: A has deficient rank in this orientation")
    return float(lo)
