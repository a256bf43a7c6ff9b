"""Composite problem: sigmoid-loss finite sum + ridge, L1 regularizer, linear constraint.

The smooth part is ``f(x) = (1/n) sum_i f_i(x)`` with
``f_i(x) = sigma(b_i a_i^T x) + (lambda2/2) ||x||^2`` and
``sigma(z) = 1 / (1 + exp(z))``; the ridge is folded into every component so
each stochastic estimator sees it identically.  The nonsmooth part is
``g(y) = lambda1 ||y||_1`` and the constraint is ``A x + B y = c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .linalg import SparseMatrix, spmv, spmv_transpose

__all__ = [
    "SIGMOID_CURVATURE_MAX",
    "Sample",
    "SmoothSum",
    "Regularizer",
    "ConstraintSpec",
    "NEG_IDENTITY",
    "ProblemSpec",
    "sigmoid_loss",
    "sigmoid_loss_deriv",
    "sigmoid_loss_second",
    "soft_threshold",
    "l1_subdiff_dist",
    "lipschitz_bound",
]

# max_z |d^2/dz^2 1/(1+e^z)| = 1/(6 sqrt 3), attained at s(1-s) extremes of s(1-s)(1-2s)
SIGMOID_CURVATURE_MAX = 1.0 / (6.0 * math.sqrt(3.0))


def sigmoid_loss(z):
    """``1/(1+e^z)``, evaluated without overflow for any finite z."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, e / (1.0 + e), 1.0 / (1.0 + e))


def sigmoid_loss_deriv(z):
    """``-e^z/(1+e^z)^2``; symmetric in z, so only ``exp(-|z|)`` is formed."""
    e = np.exp(-np.abs(np.asarray(z, dtype=np.float64)))
    return -e / (1.0 + e) ** 2


def sigmoid_loss_second(z):
    s = sigmoid_loss(z)
    return s * (1.0 - s) * (1.0 - 2.0 * s)


@dataclass(frozen=True)
class Sample:
    indices: tuple[int, ...]
    values: tuple[float, ...]
    label: int

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label!r}")
        if len(self.indices) != len(self.values):
            raise ValueError("indices and values differ in length")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise ValueError("feature indices must be strictly increasing")
        if self.indices and self.indices[0] < 0:
            raise ValueError("negative feature index")


class SmoothSum:
    """Sigmoid-loss finite sum with ridge; features held as a dense ``n x d`` array."""

    def __init__(self, features, labels, ridge_weight: float = 0.0):
        X = np.array(features, dtype=np.float64)
        b = np.array(labels, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError("features must be a 2-d array")
        if X.shape[0] < 1:
            raise ValueError("need at least one sample")
        if b.shape != (X.shape[0],) or not np.all(np.isin(b, (-1.0, 1.0))):
            raise ValueError("labels must be a length-n vector of +-1")
        if not (ridge_weight >= 0 and math.isfinite(ridge_weight)):
            raise ValueError("ridge_weight must be finite and >= 0")
        X.setflags(write=False)
        b.setflags(write=False)
        self.features = X
        self.labels = b
        self.ridge_weight = float(ridge_weight)
        # b_i a_i, the only form in which features enter f_i
        self._ba = X * b[:, None]
        self._ba.setflags(write=False)

    @classmethod
    def from_samples(cls, samples: Sequence[Sample], dimension: int, ridge_weight: float = 0.0):
        X = np.zeros((len(samples), dimension))
        for r, s in enumerate(samples):
            if s.indices and s.indices[-1] >= dimension:
                raise ValueError(f"sample {r}: feature index {s.indices[-1]} >= dimension {dimension}")
            X[r, list(s.indices)] = s.values
        return cls(X, [s.label for s in samples], ridge_weight)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    def _check(self, i: int):
        if not 0 <= i < self.n:
            raise IndexError(f"component index {i} out of range [0, {self.n})")

    def component_value(self, i: int, x) -> float:
        self._check(i)
        z = float(self._ba[i] @ x)
        return float(sigmoid_loss(z)) + 0.5 * self.ridge_weight * float(x @ x)

    def component_grad(self, i: int, x) -> np.ndarray:
        self._check(i)
        row = self._ba[i]
        z = float(row @ x)
        # scalar form of sigmoid_loss_deriv; this is the hot path of every solver
        e = math.exp(-abs(z))
        return (-e / (1.0 + e) ** 2) * row + self.ridge_weight * x

    def value(self, x) -> float:
        z = self._ba @ x
        return float(np.mean(sigmoid_loss(z))) + 0.5 * self.ridge_weight * float(x @ x)

    def full_grad(self, x) -> np.ndarray:
        w = sigmoid_loss_deriv(self._ba @ x)
        return (w @ self._ba) / self.n + self.ridge_weight * x

    def component_grads(self, x) -> np.ndarray:
        """All ``n`` component gradients at one point, as rows."""
        w = sigmoid_loss_deriv(self._ba @ x)
        return w[:, None] * self._ba + self.ridge_weight * x[None, :]

    def subset(self, idx) -> "SmoothSum":
        idx = np.asarray(idx)
        return SmoothSum(self.features[idx], self.labels[idx], self.ridge_weight)


@dataclass(frozen=True)
class Regularizer:
    l1_weight: float = 0.0

    def __post_init__(self):
        if not (self.l1_weight >= 0 and math.isfinite(self.l1_weight)):
            raise ValueError("l1_weight must be finite and >= 0")

    def value(self, y) -> float:
        return self.l1_weight * float(np.sum(np.abs(y)))

    def prox(self, v, step: float) -> np.ndarray:
        return soft_threshold(v, self.l1_weight * step)


class _NegIdentity:
    """Marker for ``B = -I``."""

    def __repr__(self):
        return "NEG_IDENTITY"

    def __reduce__(self):
        # unpickle to the module singleton so identity checks survive process pools
        return "NEG_IDENTITY"


NEG_IDENTITY = _NegIdentity()


@dataclass(frozen=True)
class ConstraintSpec:
    A: SparseMatrix
    B: object = NEG_IDENTITY
    c: np.ndarray | None = None

    def __post_init__(self):
        if self.B is not NEG_IDENTITY and not isinstance(self.B, SparseMatrix):
            raise TypeError("B must be NEG_IDENTITY or a SparseMatrix")
        if isinstance(self.B, SparseMatrix) and self.B.rows != self.A.rows:
            raise ValueError("rows(A) != rows(B)")
        c = np.zeros(self.A.rows) if self.c is None else np.array(self.c, dtype=np.float64)
        if c.shape != (self.A.rows,):
            raise ValueError("len(c) != rows(A)")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @property
    def standard(self) -> bool:
        """True for the built-in shape ``A x - y = 0``."""
        return self.B is NEG_IDENTITY and not np.any(self.c)

    @property
    def y_dim(self) -> int:
        return self.A.rows if self.B is NEG_IDENTITY else self.B.cols

    def apply_B(self, y) -> np.ndarray:
        return -np.asarray(y, dtype=np.float64) if self.B is NEG_IDENTITY else spmv(self.B, y)

    def apply_Bt(self, v) -> np.ndarray:
        return -np.asarray(v, dtype=np.float64) if self.B is NEG_IDENTITY else spmv_transpose(self.B, v)

    def residual(self, x, y) -> np.ndarray:
        return spmv(self.A, x) + self.apply_B(y) - self.c

    def B_norm_sq(self) -> float:
        if self.B is NEG_IDENTITY:
            return 1.0
        from .linalg import spectral_norm_sq

        return spectral_norm_sq(self.B).value


def lipschitz_bound(smooth: SmoothSum) -> float:
    """``max_i ||a_i||^2 * max|sigma''| + lambda2``, an upper bound on every L_i."""
    sq = np.einsum("ij,ij->i", smooth.features, smooth.features)
    return float(sq.max()) * SIGMOID_CURVATURE_MAX + smooth.ridge_weight


@dataclass
class ProblemSpec:
    smooth: SmoothSum
    reg: Regularizer
    constraint: ConstraintSpec
    lipschitz: float | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        A = self.constraint.A
        if A.cols != self.smooth.dimension:
            raise ValueError(f"cols(A)={A.cols} != feature dimension {self.smooth.dimension}")
        floor = lipschitz_bound(self.smooth)
        if self.lipschitz is None:
            self.lipschitz = floor
        elif not self.lipschitz >= floor:
            raise ValueError(f"lipschitz={self.lipschitz} is below the analytic bound {floor}")
        if self.lipschitz <= 0:
            raise ValueError("lipschitz constant must be positive")

    @property
    def n(self) -> int:
        return self.smooth.n

    @property
    def dimension(self) -> int:
        return self.smooth.dimension

    @property
    def A(self) -> SparseMatrix:
        return self.constraint.A

    def objective(self, x) -> float:
        """``(1/n) sum sigma(b_i a_i^T x) + lambda1 ||A x||_1 + (lambda2/2)||x||^2``."""
        x = np.asarray(x, dtype=np.float64)
        return self.smooth.value(x) + self.reg.value(spmv(self.A, x))

    def augmented_lagrangian(self, x, y, lam, rho: float) -> float:
        r = self.constraint.residual(x, y)
        return (self.smooth.value(x) + self.reg.value(y)
                - float(lam @ r) + 0.5 * rho * float(r @ r))

    def cached(self, key, build):
        if key not in self._cache:
            self._cache[key] = build()
        return self._cache[key]


def soft_threshold(v, tau: float) -> np.ndarray:
    if tau < 0:
        raise ValueError("soft_threshold: tau must be >= 0")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


def l1_subdiff_dist(u, y, lambda1: float) -> float:
    """``dist(u, d(lambda1 ||.||_1)(y))``."""
    u = np.asarray(u, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if u.shape != y.shape:
        raise ValueError("u and y differ in shape")
    d = np.where(y != 0, np.abs(u - lambda1 * np.sign(y)), np.maximum(np.abs(u) - lambda1, 0.0))
    return float(np.sqrt(d @ d))
