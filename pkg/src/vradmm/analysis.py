"""Stationarity residuals, theta, Lyapunov values and per-iteration replays.

The decrease statements of the analysis are about expectations over index
draws.  :func:`expected_lyapunov_oracle` evaluates those expectations
exactly on tiny problems by running the deterministic update along every
index path.  The replay observers check the realized-path inequalities
(dual identity, residual-theta bounds, the plain-estimator lower bound) on
every iteration of an actual run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .engine import (
    AdmmRunner,
    AdmmState,
    QMode,
    SolverConfig,
    StepInfo,
    q_spectrum,
    theory_params,
)
from .estimators import EstimatorKind, GradientTable
from .model import ProblemSpec, l1_subdiff_dist
from .theory import (  # re-exported: the analysis constants live in theory
    SequenceOverflow,
    TheoryParams,
    alpha_sequence,
    gamma,
    gamma_profile,
    h_sequence,
    history_coefficient,
    residual_theta_bounds,
)

__all__ = [
    "TheoryParams",
    "SequenceOverflow",
    "h_sequence",
    "alpha_sequence",
    "gamma",
    "gamma_profile",
    "history_coefficient",
    "residual_theta_bounds",
    "ResidualTriple",
    "residuals",
    "ThetaHistory",
    "theta",
    "LyapunovWindow",
    "LyapunovValue",
    "lyapunov",
    "lyapunov_lower_bound",
    "EnumerationResult",
    "expected_lyapunov_oracle",
    "monte_carlo_lyapunov",
    "DualIdentityReplay",
    "ResidualBoundReplay",
    "PlainLowerBoundReplay",
    "plain_lower_bound_check",
]


@dataclass(frozen=True)
class ResidualTriple:
    r_grad: float
    r_subgrad: float
    r_feas: float

    @property
    def eps(self) -> float:
        return max(self.r_grad, self.r_subgrad, self.r_feas)


def residuals(x, y, lam, problem: ProblemSpec) -> ResidualTriple:
    """Squared stationarity measures of ``(x, y, lam)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    S = problem.A.to_scipy()
    cons = problem.constraint
    dg = problem.smooth.full_grad(x) - S.T @ lam
    rs = l1_subdiff_dist(cons.apply_Bt(lam), y, problem.reg.l1_weight) ** 2
    rf = cons.residual(x, y)
    return ResidualTriple(float(dg @ dg), rs, float(rf @ rf))


@dataclass(frozen=True)
class ThetaHistory:
    """Iterates around time ``t``; ``z``/``z_prev`` are table points at ``t``/``t-1``."""

    x_next: np.ndarray
    x: np.ndarray
    x_prev: np.ndarray
    x_tilde: np.ndarray | None = None
    z: np.ndarray | None = None
    z_prev: np.ndarray | None = None


def _mean_sq_dist(x, Z) -> float:
    D = np.asarray(Z, dtype=np.float64) - x
    return float(np.einsum("ij,ij->", D, D)) / D.shape[0]


def theta(kind: EstimatorKind, h: ThetaHistory) -> float:
    """Sum of squared successive-iterate and reference distances at time ``t``."""
    if h.x_prev is None:
        raise ValueError("theta needs x_{t-1}")
    a = h.x_next - h.x
    b = h.x - h.x_prev
    out = float(a @ a) + float(b @ b)
    if kind is EstimatorKind.SVRG:
        if h.x_tilde is None:
            raise ValueError("SVRG theta needs the snapshot")
        c = h.x - h.x_tilde
        e = h.x_prev - h.x_tilde
        return out + float(c @ c) + float(e @ e)
    if kind.uses_table:
        if h.z is None or h.z_prev is None:
            raise ValueError("table theta needs z_t and z_{t-1}")
        n = np.asarray(h.z).shape[0]
        w = 1.0 if kind is EstimatorKind.SAGA else (1.0 - 1.0 / n) ** 2
        return out + w * (_mean_sq_dist(h.x, h.z) + _mean_sq_dist(h.x_prev, h.z_prev))
    return out


@dataclass(frozen=True)
class LyapunovWindow:
    """State at time ``t`` (1-based) and what the history terms need."""

    t: int
    x: np.ndarray
    y: np.ndarray
    lam: np.ndarray
    x_prev: np.ndarray
    x_tilde: np.ndarray | None = None
    table_dist: float | None = None       # (1/n) sum ||x_t - z_i^t||^2
    table_dist_prev: float | None = None  # (1/n) sum ||x_{t-1} - z_i^{t-1}||^2


@dataclass(frozen=True)
class LyapunovValue:
    base: float
    history: float
    total: float


def lyapunov(kind: EstimatorKind, w: LyapunovWindow, seq, params: TheoryParams,
             problem: ProblemSpec) -> LyapunovValue:
    """Realized-path Lyapunov value: augmented Lagrangian plus history penalties.

    ``seq`` is the ``h`` array (SVRG) or the ``alpha`` array (SAG/SAGA).
    """
    if w.t < 1:
        raise ValueError("Lyapunov value needs t >= 1")
    base = problem.augmented_lagrangian(w.x, w.y, w.lam, params.rho)
    dx = w.x - w.x_prev
    hist = history_coefficient(params) * float(dx @ dx)
    if kind is EstimatorKind.SVRG:
        a = w.x - w.x_tilde
        b = w.x_prev - w.x_tilde
        hist += seq[(w.t - 1) % len(seq)] * (float(a @ a) + float(b @ b))
    elif kind.uses_table:
        n = params.n
        if n >= 2:
            coef = seq[w.t - 1]
            if kind is EstimatorKind.SAG:
                coef *= (1.0 - 1.0 / n) ** 2
            hist += coef * (w.table_dist + w.table_dist_prev)
    else:
        raise ValueError("no Lyapunov sequence for the plain estimator")
    return LyapunovValue(base, hist, base + hist)


def lyapunov_lower_bound(lam_prev, lam, rho: float, f_star: float = 0.0, g_star: float = 0.0) -> float:
    """``f* + g* - ||lam_{t-1}||^2/(2 rho) + ||lam_t||^2/(2 rho)``."""
    return f_star + g_star - float(lam_prev @ lam_prev) / (2 * rho) + float(lam @ lam) / (2 * rho)


# ---------------------------------------------------------------------------
# exact expectation by path enumeration

@dataclass
class EnumerationResult:
    kind: EstimatorKind
    expectations: np.ndarray          # E[value_t], t = 1..steps
    paths: int
    lower_bound_slack: float          # min over paths and t of value - lower bound
    lower_bound_violations: int
    params: TheoryParams
    per_step_std: np.ndarray = field(default=None)

    @property
    def differences(self) -> np.ndarray:
        return np.diff(self.expectations)

    def non_increasing(self, tol: float = 0.0) -> bool:
        return bool(np.all(self.differences <= tol))


def _sequence_for(kind: EstimatorKind, params: TheoryParams, steps: int):
    if kind is EstimatorKind.SVRG:
        return h_sequence(params)
    if kind.uses_table:
        return alpha_sequence(kind, params, steps) if params.n >= 2 else None
    raise ValueError("enumeration oracle covers SVRG, SAG and SAGA")


class _PathValue:
    """Lyapunov value of the state just produced by a step."""

    def __init__(self, runner: AdmmRunner, params: TheoryParams, seq):
        self.r = runner
        self.p = params
        self.seq = seq
        self.kind = runner.kind

    def __call__(self, s: AdmmState, d_prev: float) -> tuple[float, float]:
        """Return ``(value, D_t)``; ``d_prev`` is ``D_{t-1}``."""
        kind = self.kind
        if kind.uses_table:
            d_now = s.est.mean_sq_dist(s.x)
            w = LyapunovWindow(s.k, s.x, s.y, s.lam, s.x_prev, None, d_now, d_prev)
        else:
            d_now = 0.0
            w = LyapunovWindow(s.k, s.x, s.y, s.lam, s.x_prev, s.est.x_tilde)
        return lyapunov(kind, w, self.seq, self.p, self.r.problem).total, d_now


def expected_lyapunov_oracle(kind: EstimatorKind, problem: ProblemSpec, config: SolverConfig,
                             steps: int, params: TheoryParams | None = None, x0=None,
                             max_paths: int = 65536) -> EnumerationResult:
    """Exact ``E[value_t]`` for ``t = 1..steps`` over all index paths.

    SVRG branches over ``i`` (``n`` ways); SAG/SAGA branch over the pair
    ``(i, j)`` (``n^2`` ways).  Every path is also checked against the
    realized lower bound.
    """
    kind = EstimatorKind.parse(kind)
    if config.algorithm is not kind:
        raise ValueError("config algorithm differs from kind")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    n = problem.n
    branch = n * n if kind.uses_table else n
    if branch ** steps > max_paths:
        raise ValueError(f"{branch ** steps} paths exceed the budget of {max_paths}")
    runner = AdmmRunner(problem, config)
    params = theory_params(problem, config, horizon=steps) if params is None else params
    seq = _sequence_for(kind, params, steps)
    value = _PathValue(runner, params, seq)
    sums = np.zeros(steps)
    sq = np.zeros(steps)
    stats = {"slack": math.inf, "viol": 0, "paths": 0}
    choices = [(i, j) for i in range(n) for j in range(n)] if kind.uses_table else [(i, 0) for i in range(n)]
    prob = 1.0 / len(choices)

    def walk(s: AdmmState, depth: int, weight: float, d_prev: float):
        if depth == steps:
            stats["paths"] += 1
            return
        for i, j in choices:
            c = s.copy()
            lam_before = c.lam
            runner.step(c, i, j)
            w = weight * prob
            val, d_now = value(c, d_prev)
            sums[depth] += w * val
            sq[depth] += w * val * val
            slack = val - lyapunov_lower_bound(lam_before, c.lam, config.rho)
            stats["slack"] = min(stats["slack"], slack)
            if slack < 0:
                stats["viol"] += 1
            walk(c, depth + 1, w, d_now)

    walk(runner.initial_state(x0), 0, 1.0, 0.0)
    std = np.sqrt(np.maximum(sq - sums ** 2, 0.0))
    return EnumerationResult(kind, sums, stats["paths"], stats["slack"], stats["viol"], params, std)


def monte_carlo_lyapunov(kind: EstimatorKind, problem: ProblemSpec, config: SolverConfig,
                         steps: int, runs: int, seed: int = 0, params: TheoryParams | None = None,
                         x0=None) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and standard error of the Lyapunov values over random paths."""
    kind = EstimatorKind.parse(kind)
    runner = AdmmRunner(problem, config)
    params = theory_params(problem, config, horizon=steps) if params is None else params
    value = _PathValue(runner, params, _sequence_for(kind, params, steps))
    rng = np.random.default_rng(seed)
    draws = rng.integers(0, problem.n, size=(runs, steps, 2))
    vals = np.empty((runs, steps))
    start = runner.initial_state(x0)
    for r in range(runs):
        s = start.copy()
        d_prev = 0.0
        for t in range(steps):
            runner.step(s, int(draws[r, t, 0]), int(draws[r, t, 1]))
            vals[r, t], d_prev = value(s, d_prev)
    # column sums over many rows accumulate sequentially in numpy; fsum keeps them exact
    mean = np.array([math.fsum(col) for col in vals.T]) / runs
    return mean, vals.std(axis=0, ddof=1) / math.sqrt(runs)


# ---------------------------------------------------------------------------
# per-iteration replays (observers for engine.run)

def _qmul(problem: ProblemSpec, config: SolverConfig, eta: float, u) -> np.ndarray:
    """``eta Q u``."""
    if config.q_mode is QMode.IDENTITY:
        return eta * u
    S = problem.A.to_scipy()
    return eta * u - config.rho * (S.T @ (S @ u))


class DualIdentityReplay:
    """Checks ``A^T lam_{k+1} = v_k - eta Q (x_k - x_{k+1})`` on every step."""

    def __init__(self, problem: ProblemSpec, config: SolverConfig):
        self.problem = problem
        self.config = config
        self._St = problem.A.to_scipy().T.tocsr()
        self.errors = []

    def __call__(self, s: StepInfo):
        lhs = self._St @ s.lam_next
        rhs = s.v - _qmul(self.problem, self.config, s.eta, s.x - s.x_next)
        err = float(np.max(np.abs(lhs - rhs))) / (1.0 + float(np.max(np.abs(s.v))))
        self.errors.append(err)

    @property
    def max_error(self) -> float:
        return max(self.errors, default=0.0)


class ResidualBoundReplay:
    """Realized-path residual bounds, one entry per iteration ``k`` (state ``k+1``).

    With ``D_k = ||v_k - grad f(x_k)||^2`` and ``s = L^2 + eta^2 phi_max^2``:

    * ``r_grad(k+1) <= 3 D_k + 3 s ||x_{k+1} - x_k||^2``
    * ``rho^2 r_feas(k+1) <= (5/sigma_A)(D_k + D_{k-1}) + 5 eta^2 phi_max^2/sigma_A ||x_{k+1}-x_k||^2
      + 5 s/sigma_A ||x_k - x_{k-1}||^2``  (``k >= 1``)
    * ``r_subgrad(k+1) <= rho^2 ||B||^2 ||A||^2 ||x_{k+1} - x_k||^2``

    Each is stored as ``(lhs, rhs)``.
    """

    def __init__(self, problem: ProblemSpec, config: SolverConfig, params: TheoryParams | None = None):
        self.problem = problem
        self.config = config
        self.params = theory_params(problem, config) if params is None else params
        self._S = problem.A.to_scipy()
        self.grad = []
        self.feas = []
        self.subgrad = []
        self.theta_pairs = []
        self._prev_dev = None

    def __call__(self, s: StepInfo):
        p = self.problem
        par = self.params
        phi_min, phi_max = q_spectrum(p, self.config, s.eta)
        eta2phi2 = s.eta ** 2 * phi_max ** 2
        ssum = par.L ** 2 + eta2phi2
        dev = s.v - p.smooth.full_grad(s.x)
        D = float(dev @ dev)
        dx = s.x_next - s.x
        dx2 = float(dx @ dx)
        res = residuals(s.x_next, s.y_next, s.lam_next, p)
        self.grad.append((res.r_grad, 3.0 * D + 3.0 * ssum * dx2))
        k3 = self.config.rho ** 2 * par.B_norm_sq * par.A_norm_sq
        self.subgrad.append((res.r_subgrad, k3 * dx2))
        if s.x_prev is not None and self._prev_dev is not None:
            dp = s.x - s.x_prev
            rhs = (5.0 / par.sigma_a) * (D + self._prev_dev) + 5.0 * eta2phi2 / par.sigma_a * dx2 \
                + 5.0 * ssum / par.sigma_a * float(dp @ dp)
            dl = s.lam_next - s.lam
            self.feas.append((float(dl @ dl), rhs))
        self._prev_dev = D

    @staticmethod
    def violations(pairs, rtol: float = 1e-9, atol: float = 1e-15) -> int:
        return sum(1 for lhs, rhs in pairs if lhs > rhs * (1 + rtol) + atol)

    def summary(self, rtol: float = 1e-9, atol: float = 1e-15) -> dict:
        return {name: (self.violations(getattr(self, name), rtol, atol), len(getattr(self, name)))
                for name in ("grad", "feas", "subgrad")}


class PlainLowerBoundReplay:
    """Plain-estimator lower bound on the gradient residual, per iteration.

    ``||A^T lam_{k+1} - grad f(x_{k+1})|| >= ||grad f_i(x_k) - grad f(x_k)||
    - (L + eta phi_max) ||x_k - x_{k+1}||``.
    """

    def __init__(self, problem: ProblemSpec, config: SolverConfig):
        if not config.algorithm.is_plain:
            raise ValueError("the lower bound concerns the plain estimator")
        self.problem = problem
        self.config = config
        self._St = problem.A.to_scipy().T.tocsr()
        self.pairs = []      # (lower_bound, residual norm)
        self.deviation = []

    def __call__(self, s: StepInfo):
        p = self.problem
        _, phi_max = q_spectrum(p, self.config, s.eta)
        dev = float(np.linalg.norm(s.v - p.smooth.full_grad(s.x)))
        step = float(np.linalg.norm(s.x - s.x_next))
        lower = dev - (p.lipschitz + s.eta * phi_max) * step
        resid = float(np.linalg.norm(self._St @ s.lam_next - p.smooth.full_grad(s.x_next)))
        self.deviation.append(dev)
        self.pairs.append((lower, resid))

    def violations(self, rtol: float = 1e-9, atol: float = 1e-12) -> int:
        return sum(1 for lo, r in self.pairs if r < lo - rtol * abs(lo) - atol)


def plain_lower_bound_check(steps, problem: ProblemSpec, config: SolverConfig) -> list[tuple[float, float]]:
    """Replay the plain-estimator lower bound over recorded :class:`StepInfo` objects."""
    rep = PlainLowerBoundReplay(problem, config)
    n_seen = 0
    for s in steps:
        if not isinstance(s, StepInfo):
            raise TypeError("plain_lower_bound_check needs StepInfo records")
        rep(s)
        n_seen += 1
    if n_seen == 0:
        raise ValueError("trace lacks step records")
    return rep.pairs
