"""Stochastic gradient estimators and their state.

Four constructions of a gradient estimate ``v`` for ``f = (1/n) sum f_i``:

* plain  ``grad f_i(x)``
* SVRG   ``grad f_i(x) - grad f_i(x_tilde) + grad f(x_tilde)``
* SAG    ``(1/n)(grad f_i(x) - grad f_i(z_i)) + psi``
* SAGA   ``grad f_i(x) - grad f_i(z_i) + psi``

with ``psi = (1/n) sum_j grad f_j(z_j)`` the running average of a gradient
table.  The module also provides the exact average of each estimator over
``i`` and its exact variance, both by enumeration, together with the
closed-form variance bounds the estimators satisfy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import SmoothSum

__all__ = [
    "EstimatorKind",
    "Snapshot",
    "GradientTable",
    "snapshot_refresh",
    "initial_table",
    "table_update",
    "estimate",
    "expectation_over_i",
    "exact_variance",
    "variance_bound",
]


class EstimatorKind(enum.Enum):
    PLAIN = "sadmm"          # plain gradient, eta_t = eta0 * sqrt(t)
    PLAIN_FIXED = "sadmm-f"  # plain gradient, constant eta
    SVRG = "svrg"
    SAG = "sag"
    SAGA = "saga"

    @classmethod
    def parse(cls, name) -> "EstimatorKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("_", "-")
        aliases = {"plain": "sadmm", "s-admm": "sadmm", "plain-fixed": "sadmm-f",
                   "s-admm-f": "sadmm-f", "sadmmf": "sadmm-f",
                   "svrg-admm": "svrg", "sag-admm": "sag", "saga-admm": "saga"}
        key = aliases.get(key, key)
        for k in cls:
            if k.value == key:
                return k
        raise ValueError(f"unknown algorithm {name!r}; expected one of "
                         + ", ".join(k.value for k in cls))

    @property
    def is_plain(self) -> bool:
        return self in (EstimatorKind.PLAIN, EstimatorKind.PLAIN_FIXED)

    @property
    def uses_table(self) -> bool:
        return self in (EstimatorKind.SAG, EstimatorKind.SAGA)


@dataclass(frozen=True)
class Snapshot:
    x_tilde: np.ndarray
    grad_tilde: np.ndarray


def snapshot_refresh(smooth: SmoothSum, x) -> Snapshot:
    x = np.array(x, dtype=np.float64)
    g = smooth.full_grad(x)
    x.setflags(write=False)
    g.setflags(write=False)
    return Snapshot(x, g)


class GradientTable:
    """Stored points ``z_i``, their component gradients ``g_i`` and ``psi``.

    ``psi`` is updated incrementally and recomputed from the stored gradients
    every ``n`` updates to keep rounding drift bounded.  With ``lean=True``
    the points are not kept; the table still supports estimates but not the
    point-distance terms used by bounds and diagnostics.
    """

    def __init__(self, points, grads, psi=None, *, lean: bool = False):
        grads = np.array(grads, dtype=np.float64)
        if grads.ndim != 2:
            raise ValueError("grads must be n x d")
        self.grads = grads
        self.points = None if lean else np.array(points, dtype=np.float64)
        if self.points is not None and self.points.shape != grads.shape:
            raise ValueError("points and grads differ in shape")
        self.psi = grads.mean(axis=0) if psi is None else np.array(psi, dtype=np.float64)
        self.updates_since_refresh = 0

    @property
    def n(self) -> int:
        return self.grads.shape[0]

    @property
    def lean(self) -> bool:
        return self.points is None

    def copy(self) -> "GradientTable":
        t = GradientTable.__new__(GradientTable)
        t.grads = self.grads.copy()
        t.points = None if self.points is None else self.points.copy()
        t.psi = self.psi.copy()
        t.updates_since_refresh = self.updates_since_refresh
        return t

    def recomputed_psi(self) -> np.ndarray:
        return self.grads.mean(axis=0)

    def mean_sq_dist(self, x) -> float:
        """``(1/n) sum_i ||x - z_i||^2``."""
        if self.points is None:
            raise ValueError("lean table keeps no points")
        D = self.points - x
        return float(np.einsum("ij,ij->", D, D)) / self.n


def initial_table(smooth: SmoothSum, x0, *, lean: bool = False) -> GradientTable:
    """All slots at ``x0``; ``psi = grad f(x0)``."""
    x0 = np.asarray(x0, dtype=np.float64)
    grads = smooth.component_grads(x0)
    points = None if lean else np.tile(x0, (smooth.n, 1))
    return GradientTable(points, grads, lean=lean)


def table_update(table: GradientTable, smooth: SmoothSum, j: int, new_point,
                 new_grad=None) -> GradientTable:
    """Replace slot ``j`` in place and return the table.

    ``psi <- psi - (1/n)(g_j_old - grad f_j(new_point))``.
    """
    if not 0 <= j < table.n:
        raise IndexError(f"slot {j} out of range [0, {table.n})")
    g_new = smooth.component_grad(j, new_point) if new_grad is None else new_grad
    table.psi -= (table.grads[j] - g_new) / table.n
    table.grads[j] = g_new
    if table.points is not None:
        table.points[j] = new_point
    table.updates_since_refresh += 1
    if table.updates_since_refresh >= table.n:
        table.psi = table.recomputed_psi()
        table.updates_since_refresh = 0
    return table


def _check_state(kind: EstimatorKind, state):
    if kind is EstimatorKind.SVRG and not isinstance(state, Snapshot):
        raise TypeError("SVRG estimator needs a Snapshot state")
    if kind.uses_table and not isinstance(state, GradientTable):
        raise TypeError(f"{kind.value} estimator needs a GradientTable state")


def estimate(kind: EstimatorKind, smooth: SmoothSum, i: int, x, state=None) -> np.ndarray:
    _check_state(kind, state)
    gi = smooth.component_grad(i, x)
    if kind.is_plain:
        return gi
    if kind is EstimatorKind.SVRG:
        return gi - smooth.component_grad(i, state.x_tilde) + state.grad_tilde
    if kind is EstimatorKind.SAG:
        return (gi - state.grads[i]) / smooth.n + state.psi
    return gi - state.grads[i] + state.psi


def _all_estimates(kind: EstimatorKind, smooth: SmoothSum, x, state) -> np.ndarray:
    # row i = estimate(kind, i, x, state); vectorized over i
    _check_state(kind, state)
    G = smooth.component_grads(np.asarray(x, dtype=np.float64))
    if kind.is_plain:
        return G
    if kind is EstimatorKind.SVRG:
        return G - smooth.component_grads(state.x_tilde) + state.grad_tilde
    if kind is EstimatorKind.SAG:
        return (G - state.grads) / smooth.n + state.psi
    return G - state.grads + state.psi


def expectation_over_i(kind: EstimatorKind, smooth: SmoothSum, x, state=None) -> np.ndarray:
    return _all_estimates(kind, smooth, x, state).mean(axis=0)


def exact_variance(kind: EstimatorKind, smooth: SmoothSum, x, state=None) -> float:
    """``(1/n) sum_i ||estimate_i - grad f(x)||^2``."""
    D = _all_estimates(kind, smooth, x, state) - smooth.full_grad(np.asarray(x, dtype=np.float64))
    return float(np.einsum("ij,ij->", D, D)) / smooth.n


def variance_bound(kind: EstimatorKind, x, state, L: float) -> float:
    _check_state(kind, state)
    if kind.is_plain:
        raise ValueError("no variance bound available for the plain estimator")
    x = np.asarray(x, dtype=np.float64)
    if kind is EstimatorKind.SVRG:
        d = x - state.x_tilde
        return L * L * float(d @ d)
    saga = L * L * state.mean_sq_dist(x)
    if kind is EstimatorKind.SAGA:
        return saga
    n = state.n
    return (1.0 - 1.0 / n) ** 2 * saga
