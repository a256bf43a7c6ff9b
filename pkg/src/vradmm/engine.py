"""ADMM update steps and the four stochastic solver loops.

Every solver iterates, for ``k = 0, 1, ..., T-1``::

    y_{k+1}   = argmin_y L_rho(x_k, y, lam_k)
    v_k       = stochastic estimate of grad f(x_k)
    x_{k+1}   = argmin_x  v_k^T x + (eta/2)||x - x_k||_Q^2 + (rho/2)||A x + B y_{k+1} - c - lam_k/rho||^2
    lam_{k+1} = lam_k - rho (A x_{k+1} + B y_{k+1} - c)

with ``L_rho(x, y, lam) = f(x) + g(y) - <lam, Ax+By-c> + (rho/2)||Ax+By-c||^2``.
SVRG refreshes its snapshot every ``m`` iterations; SAG/SAGA overwrite one
table slot ``j_k`` with ``x_k`` after the multiplier step.
"""

from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg

from .estimators import (
    EstimatorKind,
    GradientTable,
    Snapshot,
    estimate,
    initial_table,
    snapshot_refresh,
    table_update,
)
from .linalg import SparseMatrix, factor_spd, gram, sigma_a, solve_spd, spectral_norm_sq
from .model import ProblemSpec, l1_subdiff_dist, soft_threshold
from .theory import (
    SequenceOverflow,
    TheoryParams,
    alpha_sequence,
    h_sequence,
    history_coefficient,
    rho_floor,
    select_eta,
)

logger = logging.getLogger(__name__)

__all__ = [
    "QMode",
    "SolverConfig",
    "AdmmState",
    "StepInfo",
    "IterationRecord",
    "RunTrace",
    "DivergenceError",
    "XUpdate",
    "AdmmRunner",
    "y_step",
    "x_step_exact",
    "x_step_linearized",
    "lambda_step",
    "initial_multiplier",
    "run",
    "select_eta",
    "rho_floor",
    "iterations_for_passes",
    "theory_params",
    "q_spectrum",
]


class QMode(enum.Enum):
    IDENTITY = "identity"
    UZAWA = "uzawa"

    @classmethod
    def parse(cls, v) -> "QMode":
        if isinstance(v, cls):
            return v
        key = str(v).strip().lower()
        if key in ("identity", "i", "exact"):
            return cls.IDENTITY
        if key in ("uzawa", "linearized", "uzawalinearized", "uzawa-linearized"):
            return cls.UZAWA
        raise ValueError(f"unknown q_mode {v!r}; expected 'identity' or 'uzawa'")


@dataclass(frozen=True)
class SolverConfig:
    """Settings of one solver run.

    ``schedule`` is ``"sqrt_t"`` (``eta_t = eta * sqrt(t)``, t from 1) or
    ``"constant"``; ``None`` picks ``sqrt_t`` for the plain S-ADMM and
    ``constant`` for everything else.  ``m=None`` means ``m = n``.
    """

    algorithm: EstimatorKind = EstimatorKind.SVRG
    rho: float = 6.0
    eta: float = 2.0
    q_mode: QMode = QMode.IDENTITY
    m: int | None = None
    iterations: int = 1000
    seed: int = 0
    schedule: str | None = None
    beta: float = 1.0
    vartheta: float = 1.0
    diagnostics: bool = False
    record_every: int = 1
    lean: bool = False
    timing: bool = False

    def __post_init__(self):
        object.__setattr__(self, "algorithm", EstimatorKind.parse(self.algorithm))
        object.__setattr__(self, "q_mode", QMode.parse(self.q_mode))
        if not (self.rho > 0 and math.isfinite(self.rho)):
            raise ValueError(f"rho must be finite and > 0, got {self.rho!r}")
        if not (self.eta > 0 and math.isfinite(self.eta)):
            raise ValueError(f"eta must be finite and > 0, got {self.eta!r}")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")
        if self.m is not None and self.m < 1:
            raise ValueError("m must be >= 1")
        if self.record_every < 1:
            raise ValueError("record_every must be >= 1")
        if self.schedule is None:
            sched = "sqrt_t" if self.algorithm is EstimatorKind.PLAIN else "constant"
            object.__setattr__(self, "schedule", sched)
        if self.schedule not in ("constant", "sqrt_t"):
            raise ValueError(f"schedule must be 'constant' or 'sqrt_t', got {self.schedule!r}")
        if not (self.beta > 0 and self.vartheta > 0):
            raise ValueError("beta and vartheta must be > 0")
        if self.diagnostics and self.lean and self.algorithm.uses_table:
            raise ValueError("diagnostics need table points; lean=True drops them")

    def epoch_length(self, n: int) -> int:
        return n if self.m is None else self.m

    def eta_at(self, k: int) -> float:
        """Step parameter used by iteration ``k`` (0-based)."""
        if self.schedule == "sqrt_t":
            return self.eta * math.sqrt(k + 1)
        return self.eta

    def validate(self, problem: ProblemSpec) -> None:
        if self.algorithm is EstimatorKind.SVRG:
            m = self.epoch_length(problem.n)
            if self.iterations % m:
                raise ValueError(f"SVRG needs iterations divisible by m (T={self.iterations}, m={m})")
        if self.q_mode is QMode.UZAWA:
            a2 = problem.cached("A_norm_sq", lambda: spectral_norm_sq(problem.A).value)
            if not self.eta > self.rho * a2:
                raise ValueError(
                    f"linearized update needs eta > rho ||A||^2 = {self.rho * a2:.6g} "
                    f"(Q not positive definite), got eta={self.eta}")


@dataclass
class AdmmState:
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    Ax: np.ndarray
    k: int = 0
    epoch: int = 0
    est: object = None
    x_prev: np.ndarray | None = None

    def copy(self) -> "AdmmState":
        est = self.est.copy() if isinstance(self.est, GradientTable) else self.est
        return AdmmState(self.x.copy(), self.y.copy(), self.lam.copy(), self.Ax.copy(),
                         self.k, self.epoch, est,
                         None if self.x_prev is None else self.x_prev.copy())


@dataclass(frozen=True)
class StepInfo:
    """One iteration ``k``: ``(x, y, lam) -> (x_next, y_next, lam_next)``.

    Arrays are fresh objects owned by the record; the solver never mutates
    them afterwards.  ``snapshot`` is the SVRG reference used by this step.
    """

    k: int
    epoch: int
    eta: float
    i: int
    j: int
    x: np.ndarray
    x_prev: np.ndarray | None
    y: np.ndarray
    lam: np.ndarray
    v: np.ndarray
    x_next: np.ndarray
    y_next: np.ndarray
    lam_next: np.ndarray
    snapshot: Snapshot | None = None
    table_dist: float = math.nan       # (1/n) sum ||x - z_i||^2 before the table update
    table_dist_next: float = math.nan  # (1/n) sum ||x_next - z_i||^2 after it


@dataclass(frozen=True)
class IterationRecord:
    t: int
    epoch: int
    effective_passes: float
    objective: float
    r_grad: float
    r_subgrad: float
    r_feas: float
    theta: float
    lyapunov: float
    realized_variance: float
    wall_ms: float
    test_loss: float = math.nan


@dataclass
class RunTrace:
    algorithm: EstimatorKind
    records: list[IterationRecord] = field(default_factory=list)
    effective_passes: float = 0.0
    state: AdmmState | None = None
    output_random: dict | None = None
    output_min_theta: dict | None = None
    output_final: dict | None = None
    theta: np.ndarray | None = None
    has_test_loss: bool = False

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)


class DivergenceError(FloatingPointError):
    def __init__(self, k: int, last_good: AdmmState):
        self.k = k
        self.last_good = last_good
        super().__init__(f"non-finite iterate at iteration {k}; last finite state is iteration {last_good.k}")


# ---------------------------------------------------------------------------
# single steps

def _require_closed_form(problem: ProblemSpec):
    if not problem.constraint.standard:
        raise ValueError("no closed-form y-step for this (B, c); pass a y_solver")


def y_step(x, lam, rho: float, problem: ProblemSpec, Ax=None) -> np.ndarray:
    """``argmin_y lambda1 ||y||_1 + <lam, y> + (rho/2)||A x - y||^2`` for ``B = -I, c = 0``."""
    _require_closed_form(problem)
    if Ax is None:
        Ax = problem.A.to_scipy() @ np.asarray(x, dtype=np.float64)
    return soft_threshold(Ax - lam / rho, problem.reg.l1_weight / rho)


def y_optimality_residual(x, y, lam, rho: float, problem: ProblemSpec) -> float:
    """``dist(-(lam - rho(Ax - y)), d g(y))``; zero at the exact y-step."""
    Ax = problem.A.to_scipy() @ x
    return l1_subdiff_dist(-(lam - rho * (Ax - y)), y, problem.reg.l1_weight)


class XUpdate:
    """Cached linear algebra for the x-step.

    Identity ``Q`` with constant ``eta`` uses a Cholesky factor of
    ``M = eta I + rho A^T A``; with a varying ``eta`` it uses the eigenbasis
    of ``A^T A``.  The linearized mode needs no solve.

    For small ``d`` (at most ``DENSE_INVERSE_MAX``) and constant ``eta`` the
    factor is expanded once into ``M^{-1}`` and ``M^{-1} A^T``, so a step
    costs two dense matvecs instead of two triangular solves.
    """

    DENSE_INVERSE_MAX = 1000

    def __init__(self, problem: ProblemSpec, rho: float, q_mode: QMode, eta: float | None = None):
        self.problem = problem
        self.rho = float(rho)
        self.q_mode = q_mode
        self._S = problem.A.to_scipy()
        self._St = self._S.T.tocsr()
        self._fixed_eta = eta
        self._factor = None
        self._eig = None
        self._inv = None
        self._eig_At = None
        if q_mode is QMode.IDENTITY:
            G = problem.cached("gram", lambda: gram(problem.A))
            d = G.shape[0]
            if eta is not None:
                self._factor = factor_spd(eta * np.eye(d) + self.rho * G)
                if d <= self.DENSE_INVERSE_MAX and problem.constraint.standard:
                    Minv = solve_spd(self._factor, np.eye(d))
                    Minv = 0.5 * (Minv + Minv.T)
                    self._inv = (Minv, np.ascontiguousarray((self._S @ Minv).T))
            else:
                w, V = scipy.linalg.eigh(G)
                self._eig = (np.maximum(w, 0.0), V, V.T.copy())
                if d <= self.DENSE_INVERSE_MAX and problem.constraint.standard:
                    self._eig_At = np.ascontiguousarray((self._S @ V).T)   # V^T A^T

    def rhs_shift(self, y, lam) -> np.ndarray:
        """``-rho A^T (B y - c - lam/rho)``."""
        cons = self.problem.constraint
        if cons.standard:
            return self._St @ (self.rho * y + lam)
        return self._St @ (lam - self.rho * (cons.apply_B(y) - cons.c))

    def __call__(self, x_bar, v, y, lam, eta: float) -> np.ndarray:
        if self.q_mode is QMode.UZAWA:
            cons = self.problem.constraint
            r = self._S @ x_bar + cons.apply_B(y) - cons.c
            return x_bar - (v + self._St @ (self.rho * r - lam)) / eta
        if self._factor is not None and eta != self._fixed_eta:
            raise ValueError("factor was built for a different eta")
        if self._inv is not None:
            Minv, K = self._inv
            return Minv @ (eta * x_bar - v) + K @ (self.rho * y + lam)
        if self._eig_At is not None:
            w, V, Vt = self._eig
            z = Vt @ (eta * x_bar - v) + self._eig_At @ (self.rho * y + lam)
            return V @ (z / (eta + self.rho * w))
        rhs = eta * x_bar - v + self.rhs_shift(y, lam)
        if self._factor is not None:
            return solve_spd(self._factor, rhs)
        w, V, Vt = self._eig
        return V @ ((Vt @ rhs) / (eta + self.rho * w))


def x_step_exact(x_bar, v, y, lam, config: SolverConfig, problem: ProblemSpec,
                 eta: float | None = None) -> np.ndarray:
    """``(eta I + rho A^T A)^{-1} (eta x_bar - v - rho A^T(B y - c - lam/rho))``."""
    if config.q_mode is not QMode.IDENTITY:
        raise ValueError("x_step_exact needs q_mode=identity")
    eta = config.eta if eta is None else eta
    upd = problem.cached(("xupdate", config.rho, eta), lambda: XUpdate(problem, config.rho, QMode.IDENTITY, eta))
    return upd(np.asarray(x_bar, float), np.asarray(v, float), np.asarray(y, float),
               np.asarray(lam, float), eta)


def x_step_linearized(x_bar, v, y, lam, config: SolverConfig, problem: ProblemSpec,
                      eta: float | None = None) -> np.ndarray:
    """``x_bar - (1/eta)(v + rho A^T(A x_bar + B y - c - lam/rho))``."""
    if config.q_mode is not QMode.UZAWA:
        raise ValueError("x_step_linearized needs q_mode=uzawa")
    eta = config.eta if eta is None else eta
    S = problem.A.to_scipy()
    cons = problem.constraint
    x_bar = np.asarray(x_bar, float)
    r = S @ x_bar + cons.apply_B(np.asarray(y, float)) - cons.c
    return x_bar - (np.asarray(v, float) + config.rho * (S.T @ (r - np.asarray(lam, float) / config.rho))) / eta


def lambda_step(lam, x, y, rho: float, problem: ProblemSpec) -> np.ndarray:
    return lam - rho * problem.constraint.residual(x, y)


def initial_multiplier(problem: ProblemSpec, x0) -> np.ndarray:
    """Minimum-norm least-squares solution of ``A^T lam = grad f(x0)``."""
    g = problem.smooth.full_grad(np.asarray(x0, dtype=np.float64))
    A = problem.A.to_dense()
    r, c = A.shape
    if r >= c:
        # lam = A (A^T A)^{-1} g lies in range(A)
        F = factor_spd(problem.cached("gram", lambda: gram(problem.A)))
        return A @ solve_spd(F, g)
    AAt = A @ A.T
    return solve_spd(factor_spd((AAt + AAt.T) * 0.5), A @ g)


def q_spectrum(problem: ProblemSpec, config: SolverConfig, eta: float | None = None) -> tuple[float, float]:
    """``(phi_min, phi_max)`` of ``Q``."""
    if config.q_mode is QMode.IDENTITY:
        return 1.0, 1.0
    eta = config.eta if eta is None else eta
    a2 = problem.cached("A_norm_sq", lambda: spectral_norm_sq(problem.A).value)
    A = problem.A
    lo = problem.cached("sigma_a", lambda: sigma_a(A)) if A.rows >= A.cols else 0.0
    return 1.0 - config.rho * a2 / eta, 1.0 - config.rho * lo / eta


def theory_params(problem: ProblemSpec, config: SolverConfig, horizon: int | None = None) -> TheoryParams:
    """Analysis constants for a run; the plain S-ADMM uses its base ``eta``."""
    pmin, pmax = q_spectrum(problem, config)
    return TheoryParams(
        L=problem.lipschitz,
        sigma_a=problem.cached("sigma_a", lambda: sigma_a(problem.A)),
        rho=config.rho, eta=config.eta, phi_min=pmin, phi_max=pmax,
        beta=config.beta, vartheta=config.vartheta, n=problem.n,
        m=config.epoch_length(problem.n),
        horizon=max(1, config.iterations if horizon is None else horizon),
        A_norm_sq=problem.cached("A_norm_sq", lambda: spectral_norm_sq(problem.A).value),
        B_norm_sq=problem.constraint.B_norm_sq(),
    )


def iterations_for_passes(kind: EstimatorKind, n: int, passes: float, m: int | None = None) -> int:
    """Largest ``T`` whose effective-pass cost does not exceed ``passes``."""
    kind = EstimatorKind.parse(kind)
    if kind.is_plain:
        return int(math.floor(passes * n + 1e-9))
    if kind.uses_table:
        return max(0, int(math.floor((passes - 1.0) * n + 1e-9)))
    m = n if m is None else m
    per_epoch = 1.0 + m / n
    return int(math.floor(passes / per_epoch + 1e-9)) * m


# ---------------------------------------------------------------------------
# solver loop

class AdmmRunner:
    """Stateful stepping of one algorithm on one problem.

    ``step`` is deterministic given the drawn indices, so a state can be
    cloned and advanced along every index path (see the enumeration oracle).
    """

    DENSE_A_MAX = 250_000

    def __init__(self, problem: ProblemSpec, config: SolverConfig,
                 y_solver: Callable | None = None):
        config.validate(problem)
        if y_solver is None:
            _require_closed_form(problem)
        self.problem = problem
        self.config = config
        self.kind = config.algorithm
        self.m = config.epoch_length(problem.n)
        self.y_solver = y_solver
        fixed = config.eta if config.schedule == "constant" else None
        self.xupdate = XUpdate(problem, config.rho, config.q_mode, fixed)
        S = problem.A.to_scipy()
        # dense matvecs are cheaper than sparse dispatch at small sizes
        self._S = S.toarray() if S.shape[0] * S.shape[1] <= self.DENSE_A_MAX else S
        self._standard = problem.constraint.standard
        self._l1_over_rho = problem.reg.l1_weight / config.rho

    def initial_state(self, x0=None, lam0=None, y0=None) -> AdmmState:
        p = self.problem
        x = np.zeros(p.dimension) if x0 is None else np.array(x0, dtype=np.float64)
        Ax = self._S @ x
        lam = initial_multiplier(p, x) if lam0 is None else np.array(lam0, dtype=np.float64)
        if y0 is None:
            y = Ax.copy() if p.constraint.standard else np.zeros(p.constraint.y_dim)
        else:
            y = np.array(y0, dtype=np.float64)
        est = None
        if self.kind.uses_table:
            est = initial_table(p.smooth, x, lean=self.config.lean)
        return AdmmState(x, y, lam, Ax, 0, 0, est, None)

    def step(self, s: AdmmState, i: int, j: int, *, info: bool = False, table_dists: bool = False):
        """Advance ``s`` in place by one iteration; optionally return a :class:`StepInfo`."""
        cfg = self.config
        p = self.problem
        kind = self.kind
        k = s.k
        eta = cfg.eta_at(k)
        refreshed = False
        if kind is EstimatorKind.SVRG and k % self.m == 0:
            s.est = snapshot_refresh(p.smooth, s.x)
            s.epoch = k // self.m
            refreshed = True
        if self.y_solver is None:
            y = soft_threshold(s.Ax - s.lam / cfg.rho, self._l1_over_rho)
        else:
            y = np.asarray(self.y_solver(s.x, s.lam, cfg.rho, p), dtype=np.float64)
        v = estimate(kind, p.smooth, i, s.x, s.est)
        x_new = self.xupdate(s.x, v, y, s.lam, eta)
        Ax_new = self._S @ x_new
        if self._standard:
            lam_new = s.lam - cfg.rho * (Ax_new - y)
        else:
            lam_new = s.lam - cfg.rho * (Ax_new + p.constraint.apply_B(y) - p.constraint.c)
        d_before = d_after = math.nan
        if kind.uses_table:
            if table_dists:
                d_before = s.est.mean_sq_dist(s.x)
            table_update(s.est, p.smooth, j, s.x)
            if table_dists:
                d_after = s.est.mean_sq_dist(x_new)
        rec = None
        if info:
            rec = StepInfo(k, s.epoch, eta, i, j, s.x, s.x_prev, s.y, s.lam, v, x_new, y, lam_new,
                           s.est if kind is EstimatorKind.SVRG else None, d_before, d_after)
        s.x_prev, s.x, s.y, s.lam, s.Ax = s.x, x_new, y, lam_new, Ax_new
        s.k = k + 1
        return rec, refreshed

    def draw_indices(self, T: int) -> np.ndarray:
        """``T x 2`` array of ``(i_k, j_k)``; ``j`` is drawn even where unused."""
        rng = np.random.default_rng(self.config.seed)
        return rng.integers(0, self.problem.n, size=(T, 2))


def _output_index(seed: int, T: int) -> int:
    return int(np.random.default_rng([seed, 1]).integers(1, T + 1))


class _Recorder:
    """Builds trace rows and the diagnostic sequences along a run.

    Time indexing: row ``t`` holds the state after ``t`` iterations.  The
    ``theta`` column of row ``t`` is ``theta_{t-1}`` (it needs ``x_t``), and
    ``realized_variance`` is ``||v_{t-1} - grad f(x_{t-1})||^2``.
    """

    def __init__(self, runner: AdmmRunner, test_problem: ProblemSpec | None, diag: bool):
        self.r = runner
        self.p = runner.problem
        self.cfg = runner.config
        self.kind = runner.kind
        self.m = runner.m
        self.diag = diag
        self.test_problem = test_problem
        self.theta = []
        self.prev_snapshot_x = None
        self.table_dist_prev = 0.0   # D_{t-1}
        self.table_dist = 0.0        # D_t, with D_0 = 0 since every z_i = x_0
        self.seq = None
        self.hist_coef = math.nan
        if diag:
            tp = theory_params(self.p, self.cfg)
            self.hist_coef = history_coefficient(tp)
            if self.kind is EstimatorKind.SVRG:
                try:
                    self.seq = h_sequence(tp)
                except SequenceOverflow:
                    self.seq = np.full(self.m, np.inf)
            elif self.kind.uses_table and self.p.n >= 2:
                self.seq = alpha_sequence(self.kind, tp, max(1, self.cfg.iterations),
                                          allow_overflow=True)
        self.pending_variance = math.nan
        self.pending_theta = math.nan
        self.pending_lyap = math.nan

    def residuals(self, s: AdmmState):
        p = self.p
        cons = p.constraint
        dg = p.smooth.full_grad(s.x) - self.r._S.T @ s.lam
        r_sub = l1_subdiff_dist(cons.apply_Bt(s.lam), s.y, p.reg.l1_weight) ** 2
        rf = s.Ax - s.y if cons.standard else s.Ax + cons.apply_B(s.y) - cons.c
        return float(dg @ dg), r_sub, float(rf @ rf)

    def lyapunov(self, s: AdmmState, x_ref) -> float:
        """Realized Lyapunov value at time ``t = s.k >= 1``.

        Plain S-ADMM has no history terms; its value is the bare augmented
        Lagrangian.
        """
        p = self.p
        base = p.augmented_lagrangian(s.x, s.y, s.lam, self.cfg.rho)
        if self.kind.is_plain:
            return base
        dx = s.x - s.x_prev
        hist = self.hist_coef * float(dx @ dx)
        t = s.k
        if self.kind is EstimatorKind.SVRG:
            a = s.x - x_ref
            b = s.x_prev - x_ref
            return base + self.seq[(t - 1) % self.m] * (float(a @ a) + float(b @ b)) + hist
        if self.seq is None:   # n = 1: the table terms vanish identically
            return base + hist
        w = self.seq[t - 1]
        if self.kind is EstimatorKind.SAG:
            w *= (1.0 - 1.0 / p.n) ** 2
        return base + w * (self.table_dist + self.table_dist_prev) + hist

    def svrg_reference(self, info: StepInfo):
        # snapshot used to produce x_k: that of epoch (k-1)//m
        k = info.k
        if k % self.m == 0:
            return self.prev_snapshot_x
        return info.snapshot.x_tilde

    def after_step(self, s: AdmmState, info: StepInfo):
        """Update sequences after iteration ``k = info.k``; ``s`` now holds time ``k+1``."""
        p = self.p
        k = info.k
        if k >= 1:
            dnext = info.x_next - info.x
            dprev = info.x - info.x_prev
            th = float(dnext @ dnext) + float(dprev @ dprev)
            if self.kind is EstimatorKind.SVRG:
                x_ref = self.svrg_reference(info)
                a = info.x - x_ref
                b = info.x_prev - x_ref
                th += float(a @ a) + float(b @ b)
            elif self.kind.uses_table:
                w = 1.0 if self.kind is EstimatorKind.SAGA else (1.0 - 1.0 / p.n) ** 2
                th += w * (info.table_dist + self.table_dist_prev)
            self.theta.append(th)
            self.pending_theta = th
        if self.kind.uses_table:
            self.table_dist_prev = info.table_dist
            self.table_dist = info.table_dist_next
        if self.diag:
            dv = info.v - p.smooth.full_grad(info.x)
            self.pending_variance = float(dv @ dv)
            x_ref = info.snapshot.x_tilde if self.kind is EstimatorKind.SVRG else None
            self.pending_lyap = self.lyapunov(s, x_ref)
        if self.kind is EstimatorKind.SVRG and (k + 1) % self.m == 0:
            self.prev_snapshot_x = info.snapshot.x_tilde

    def row(self, s: AdmmState, passes: float, wall_ms: float) -> IterationRecord:
        rg, rs, rf = self.residuals(s)
        test = math.nan if self.test_problem is None else self.test_problem.objective(s.x)
        if self.diag and s.k > 0:
            th, ly, var = self.pending_theta, self.pending_lyap, self.pending_variance
        else:
            th = ly = var = math.nan
        return IterationRecord(s.k, s.epoch, passes, self.p.objective(s.x), rg, rs, rf,
                               th, ly, var, wall_ms, test)


def run(config: SolverConfig, problem: ProblemSpec, *, x0=None, indices=None,
        observers=(), y_solver=None, test_problem: ProblemSpec | None = None,
        track_theta: bool = False) -> RunTrace:
    """Execute one solver run and return its trace.

    ``indices`` overrides the seeded draws (``T x 2`` array of ``(i, j)``).
    Observers are called with a :class:`StepInfo` after every iteration.
    ``track_theta`` keeps the theta sequence (and the argmin-theta output)
    without the rest of the diagnostics.
    """
    runner = AdmmRunner(problem, config, y_solver)
    kind = runner.kind
    T = config.iterations
    n = problem.n
    idx = runner.draw_indices(T) if indices is None else np.asarray(indices, dtype=np.int64)
    if idx.shape != (T, 2):
        raise ValueError(f"indices must have shape ({T}, 2)")
    s = runner.initial_state(x0)
    diag = config.diagnostics
    want_theta = diag or track_theta
    if want_theta and kind.uses_table and config.lean:
        raise ValueError("theta tracking needs table points; lean=True drops them")
    rec = _Recorder(runner, test_problem, diag)
    need_info = want_theta or bool(observers)
    out_t = _output_index(config.seed, T) if T > 0 else 0
    trace = RunTrace(kind, has_test_loss=test_problem is not None)

    # initialization work: the SAG/SAGA table, or the first SVRG snapshot
    full_passes = 1 if kind.uses_table or (kind is EstimatorKind.SVRG and T > 0) else 0
    evals = 0
    passes = float(full_passes)
    t0 = time.perf_counter()

    def wall():
        return (time.perf_counter() - t0) * 1e3 if config.timing else math.nan

    trace.records.append(rec.row(s, passes, wall()))
    best_theta, best = math.inf, None
    for k in range(T):
        last_good = AdmmState(s.x, s.y, s.lam, s.Ax, s.k, s.epoch, None, s.x_prev)
        info, refreshed = runner.step(s, int(idx[k, 0]), int(idx[k, 1]),
                                      info=need_info, table_dists=want_theta)
        evals += 1
        if refreshed and k > 0:
            full_passes += 1
        passes = full_passes + evals / n
        # a non-finite entry makes the dot product non-finite
        if not (math.isfinite(float(s.x @ s.x)) and math.isfinite(float(s.lam @ s.lam))):
            raise DivergenceError(k, last_good)
        if want_theta:
            rec.after_step(s, info)
            if k >= 1 and rec.pending_theta < best_theta:
                best_theta, best = rec.pending_theta, (k, info.x, info.y)
        for ob in observers:
            ob(info)
        if s.k == out_t:
            trace.output_random = {"t": s.k, "x": s.x.copy(), "y": s.y.copy()}
        if s.k % config.record_every == 0 or s.k == T:
            trace.records.append(rec.row(s, passes, wall()))
    trace.effective_passes = passes
    trace.state = s
    trace.output_final = {"t": s.k, "x": s.x.copy(), "y": s.y.copy()}
    if best is not None:
        trace.output_min_theta = {"t": best[0], "x": best[1].copy(), "y": best[2].copy(),
                                  "theta": best_theta}
    if want_theta:
        trace.theta = np.array(rec.theta)
    return trace
