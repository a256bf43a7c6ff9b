"""Closed-form constants of the convergence analysis.

Everything here is a pure function of scalar parameters: the backward
``h`` / ``alpha`` recursions, the per-step decrease margins ``Gamma``, the
penalty-parameter floor, the step-size maximizing the margin, and the
constants relating stationarity residuals to ``theta``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .estimators import EstimatorKind

logger = logging.getLogger(__name__)

__all__ = [
    "TheoryParams",
    "SequenceOverflow",
    "h_sequence",
    "alpha_sequence",
    "gamma",
    "gamma_profile",
    "select_eta",
    "rho_floor",
    "rho_floor_closed_form",
    "residual_theta_bounds",
    "history_coefficient",
]


class SequenceOverflow(ArithmeticError):
    pass


@dataclass(frozen=True)
class TheoryParams:
    """Scalars entering the analysis.

    ``phi_min``/``phi_max`` are the extreme eigenvalues of ``Q``; ``beta`` and
    ``vartheta`` are the free Young-inequality weights.  ``horizon`` is ``T``,
    needed by the backward ``alpha`` recursion.
    """

    L: float
    sigma_a: float
    rho: float
    eta: float
    phi_min: float = 1.0
    phi_max: float = 1.0
    beta: float = 1.0
    vartheta: float = 1.0
    n: int = 2
    m: int = 1
    horizon: int = 1
    A_norm_sq: float = 1.0
    B_norm_sq: float = 1.0

    def __post_init__(self):
        for name in ("L", "sigma_a", "rho", "phi_min", "phi_max", "beta", "vartheta"):
            v = getattr(self, name)
            if not (v > 0 and math.isfinite(v)):
                raise ValueError(f"{name} must be finite and positive, got {v!r}")
        if not (self.eta >= 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be finite and >= 0, got {self.eta!r}")
        if self.phi_min > self.phi_max:
            raise ValueError("phi_min > phi_max")
        if self.n < 1 or self.m < 1 or self.horizon < 1:
            raise ValueError("n, m and horizon must be >= 1")

    @property
    def chi(self) -> float:
        return self.phi_max / self.phi_min

    def with_(self, **kw) -> "TheoryParams":
        return replace(self, **kw)


def _base_margin(p: TheoryParams) -> float:
    sr = p.sigma_a * p.rho
    return (p.eta * p.phi_min + 0.5 * sr - 0.5 * p.L
            - 5.0 * (2.0 * p.eta ** 2 * p.phi_max ** 2 + p.L ** 2) / sr)


def history_coefficient(p: TheoryParams) -> float:
    """Weight ``5(L^2 + eta^2 phi_max^2)/(sigma_A rho)`` on ``||x_t - x_{t-1}||^2``."""
    return 5.0 * (p.L ** 2 + p.eta ** 2 * p.phi_max ** 2) / (p.sigma_a * p.rho)


def h_sequence(p: TheoryParams) -> np.ndarray:
    """``h_1..h_m`` (0-based array, ``h[k] = h_{k+1}``), computed backwards from ``h_m``."""
    c = 5.0 * p.L ** 2 / (p.sigma_a * p.rho)
    h = np.empty(p.m)
    h[-1] = 2.0 * c
    for k in range(p.m - 2, -1, -1):
        h[k] = (2.0 + p.beta) * h[k + 1] + c
    if not np.all(np.isfinite(h)):
        raise SequenceOverflow(f"h sequence overflows for m={p.m}")
    return h


def alpha_sequence(kind: EstimatorKind, p: TheoryParams, T: int | None = None,
                   *, allow_overflow: bool = False) -> np.ndarray:
    """``alpha_1..alpha_{T+1}`` (0-based), backwards from ``alpha_{T+1} = 0``.

    The growth factor ``2 + beta - (1+beta)/n`` is at least 2 for ``n >= 2``,
    so entries grow geometrically; past roughly ``T = 1000`` they overflow.
    """
    kind = EstimatorKind.parse(kind)
    if kind not in (EstimatorKind.SAG, EstimatorKind.SAGA):
        raise ValueError("alpha sequence is defined for SAG and SAGA only")
    T = p.horizon if T is None else T
    if T < 1:
        raise ValueError("T must be >= 1")
    if p.n < 2:
        raise ValueError("alpha sequence needs n >= 2")
    c = 5.0 * p.L ** 2 / (p.sigma_a * p.rho)
    if kind is EstimatorKind.SAG:
        c += 0.5 * p.vartheta * p.L ** 2
    g = 2.0 + p.beta - (1.0 + p.beta) / p.n
    a = np.zeros(T + 1)
    with np.errstate(over="ignore"):
        for k in range(T - 1, -1, -1):
            a[k] = g * a[k + 1] + c
    if not np.all(np.isfinite(a)):
        if not allow_overflow:
            raise SequenceOverflow(f"alpha sequence overflows for T={T}")
        logger.warning("alpha sequence overflows for T=%d; leading entries are inf", T)
    return a


def gamma(kind: EstimatorKind, t: int, p: TheoryParams, seq) -> float:
    """Decrease margin at step ``t`` (1-based).

    ``seq`` is the ``h`` array for SVRG and the ``alpha`` array for SAG/SAGA,
    as returned by :func:`h_sequence` / :func:`alpha_sequence`.
    """
    kind = EstimatorKind.parse(kind)
    base = _base_margin(p)
    if kind is EstimatorKind.SVRG:
        m = len(seq)
        if not 1 <= t <= m:
            raise IndexError(f"t={t} outside 1..{m}")
        if t < m:
            return base - (1.0 + 1.0 / p.beta) * seq[t]   # h_{t+1}
        return base - seq[0]                                # h_1 of the next epoch
    if kind in (EstimatorKind.SAG, EstimatorKind.SAGA):
        if not 1 <= t <= len(seq) - 1:
            raise IndexError(f"t={t} outside 1..{len(seq) - 1}")
        w = 1.0 + 1.0 / p.beta - 1.0 / (p.n * p.beta)
        a_next = seq[t]                                     # alpha_{t+1}
        if kind is EstimatorKind.SAGA:
            return base - w * a_next
        return base - 0.5 / p.vartheta - (1.0 - 1.0 / p.n) ** 2 * w * a_next
    raise ValueError(f"no decrease margin for {kind.value}")


def gamma_profile(kind: EstimatorKind, p: TheoryParams) -> np.ndarray:
    """``Gamma_t`` for every ``t`` (SVRG: ``t = 1..m``; SAG/SAGA: ``t = 1..T``)."""
    kind = EstimatorKind.parse(kind)
    if kind is EstimatorKind.SVRG:
        seq = h_sequence(p)
        return np.array([gamma(kind, t, p, seq) for t in range(1, p.m + 1)])
    seq = alpha_sequence(kind, p)
    return np.array([gamma(kind, t, p, seq) for t in range(1, p.horizon + 1)])


def select_eta(rho: float, sigma_a: float, phi_min: float, phi_max: float) -> float:
    """Step parameter maximizing the decrease margin: ``sigma_A rho phi_min / (20 phi_max^2)``."""
    for name, v in (("rho", rho), ("sigma_a", sigma_a), ("phi_min", phi_min), ("phi_max", phi_max)):
        if not v > 0:
            raise ValueError(f"{name} must be positive")
    return sigma_a * rho * phi_min / (20.0 * phi_max ** 2)


def _floor_terms(kind: EstimatorKind, L, sigma_a, chi, beta, vartheta, n, m, T):
    """Write the floor inequality as ``rho >= a + b/rho``; return ``(a, b)``."""
    kind = EstimatorKind.parse(kind)
    K = 40.0 * chi ** 2 / ((1.0 + 20.0 * chi ** 2) * sigma_a)
    base = 0.5 * L + 5.0 * L ** 2
    c = 5.0 * L ** 2 / sigma_a   # 5L^2/(sigma_A rho) = c/rho
    if kind is EstimatorKind.SVRG:
        if m < 1:
            raise ValueError("m must be >= 1")
        # h_1 = c/rho * (2 (2+beta)^{m-1} + sum_{k<m-1} (2+beta)^k)
        g = 2.0 + beta
        h1_unit = 2.0 * g ** (m - 1) + sum(g ** k for k in range(m - 1))
        return K * base, K * (1.0 + 1.0 / beta) * c * h1_unit
    if kind in (EstimatorKind.SAG, EstimatorKind.SAGA):
        if n < 2:
            raise ValueError("n must be >= 2")
        if T is None or T < 1:
            raise ValueError("SAG/SAGA floors need the horizon T >= 1")
        g = 2.0 + beta - (1.0 + beta) / n
        geo = sum(g ** k for k in range(T))   # alpha_1 = (const) * geo
        w = 1.0 + 1.0 / beta - 1.0 / (n * beta)
        if kind is EstimatorKind.SAGA:
            return K * base, K * w * c * geo
        w *= (1.0 - 1.0 / n) ** 2
        a = K * (base + 0.5 / vartheta + w * 0.5 * vartheta * L ** 2 * geo)
        return a, K * w * c * geo
    raise ValueError(f"no penalty floor for {kind.value}")


def rho_floor_closed_form(kind: EstimatorKind, L, sigma_a, chi=1.0, beta=1.0, vartheta=1.0,
                          n=2, m=1, T=None) -> float:
    """Positive root of ``rho^2 - a rho - b = 0`` (no ``sigma_A rho > 1`` adjustment)."""
    a, b = _floor_terms(kind, L, sigma_a, chi, beta, vartheta, n, m, T)
    return 0.5 * (a + math.sqrt(a * a + 4.0 * b))


def rho_floor(kind: EstimatorKind, L: float, sigma_a: float, chi: float = 1.0,
              beta: float = 1.0, vartheta: float = 1.0, n: int = 2, m: int = 1,
              T: int | None = None, *, rtol: float = 1e-10, max_iter: int = 1000) -> float:
    """Smallest admissible penalty parameter.

    The right-hand side of the floor inequality depends on ``rho`` through
    ``h_1`` or ``alpha_1``, giving ``rho = a + b/rho``.  The plain iteration
    contracts at rate ``b/rho^2``, which tends to 1 when ``a`` is small, so
    the averaged map ``rho <- (rho + a + b/rho)/2`` is iterated from
    ``1/sigma_A`` instead (rate below 1/2).  The result is raised just above
    ``1/sigma_A`` if needed so that ``sigma_A rho > 1``.
    """
    a, b = _floor_terms(kind, L, sigma_a, chi, beta, vartheta, n, m, T)
    if not (math.isfinite(a) and math.isfinite(b)):
        raise SequenceOverflow("penalty floor overflows (horizon or epoch too long)")
    rho = 1.0 / sigma_a
    hist = [rho]
    for _ in range(max_iter):
        new = 0.5 * (rho + a + b / rho)
        hist.append(new)
        if abs(new - rho) <= rtol * new:
            rho = new
            break
        rho = new
    else:
        raise ArithmeticError(f"rho floor fixed point did not converge; last iterates {hist[-5:]}")
    if sigma_a * rho <= 1.0:
        rho = (1.0 + 1e-9) / sigma_a
    return rho


def residual_theta_bounds(p: TheoryParams) -> tuple[float, float, float]:
    s = p.L ** 2 + p.eta ** 2 * p.phi_max ** 2
    k1 = 3.0 * s
    k2 = 5.0 * s / (p.sigma_a * p.rho ** 2)
    k3 = p.rho ** 2 * p.B_norm_sq * p.A_norm_sq
    return k1, k2, k3
