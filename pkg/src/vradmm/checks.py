"""Invariant suite run by ``vradmm check``.

Each check returns a :class:`CheckResult`.  ``tiny=True`` keeps only the
small instances (the exhaustive path enumeration over ``n <= 3`` samples
plus short replays), which finish in a few seconds.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .analysis import (
    DualIdentityReplay,
    PlainLowerBoundReplay,
    ResidualBoundReplay,
    expected_lyapunov_oracle,
)
from .data import make_problem, make_synthetic
from .engine import SolverConfig, XUpdate, run, y_optimality_residual, y_step
from .estimators import (
    EstimatorKind,
    GradientTable,
    exact_variance,
    expectation_over_i,
    snapshot_refresh,
    variance_bound,
)
from .linalg import SparseMatrix, sigma_a
from .model import ProblemSpec
from .theory import (
    TheoryParams,
    alpha_sequence,
    gamma_profile,
    h_sequence,
    rho_floor,
    select_eta,
)

__all__ = ["CheckResult", "CHECKS", "run_checks", "random_estimator_state",
           "tiny_instance", "enumeration_config", "TINY_A"]

VR_KINDS = (EstimatorKind.SVRG, EstimatorKind.SAG, EstimatorKind.SAGA)


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail} ({self.seconds:.2f}s)"


def random_estimator_state(kind: EstimatorKind, smooth, rng, scale: float = 1.0):
    """A snapshot or a table at random points, consistent with ``smooth``."""
    d = smooth.dimension
    if kind is EstimatorKind.SVRG:
        return snapshot_refresh(smooth, scale * rng.standard_normal(d))
    Z = scale * rng.standard_normal((smooth.n, d))
    G = np.array([smooth.component_grad(i, Z[i]) for i in range(smooth.n)])
    return GradientTable(Z, G)


def _estimator_bounds(tiny: bool) -> CheckResult:
    n, states = (12, 20) if tiny else (50, 100)
    X, y = make_synthetic(n, 20, seed=11)
    prob = make_problem(X, y, 0.0, 1e-3)
    sm, L = prob.smooth, prob.lipschitz
    rng = np.random.default_rng(5)
    viol, worst_mean = 0, 0.0
    for kind in VR_KINDS:
        for _ in range(states):
            x = rng.standard_normal(sm.dimension)
            st = random_estimator_state(kind, sm, rng)
            if exact_variance(kind, sm, x, st) > variance_bound(kind, x, st, L) * (1 + 1e-12):
                viol += 1
            mean = expectation_over_i(kind, sm, x, st)
            g = sm.full_grad(x)
            target = g / n + (1 - 1 / n) * st.psi if kind is EstimatorKind.SAG else g
            worst_mean = max(worst_mean, float(np.max(np.abs(mean - target))))
    ok = viol == 0 and worst_mean <= 1e-12
    return CheckResult("estimator bounds", ok,
                       f"{viol} variance-bound violations, max expectation error {worst_mean:.1e}")


def _recursions(tiny: bool) -> CheckResult:
    p = TheoryParams(L=0.7, sigma_a=1.3, rho=9.0, eta=0.5, beta=0.8, vartheta=1.5, n=4, m=6, horizon=7)
    c = 5 * p.L ** 2 / (p.sigma_a * p.rho)
    h = h_sequence(p)
    err = abs(h[-1] - 2 * c) / h[-1]
    for k in range(p.m - 1):
        err = max(err, abs(h[k] - ((2 + p.beta) * h[k + 1] + c)) / h[k])
    g = 2 + p.beta - (1 + p.beta) / p.n
    for kind, extra in ((EstimatorKind.SAGA, 0.0), (EstimatorKind.SAG, 0.5 * p.vartheta * p.L ** 2)):
        a = alpha_sequence(kind, p)
        err = max(err, abs(a[-1]))
        for k in range(p.horizon):
            err = max(err, abs(a[k] - (g * a[k + 1] + c + extra)) / a[k])
    return CheckResult("h/alpha recursions", err <= 1e-12, f"max relative error {err:.1e}")


def _margin_positivity(tiny: bool) -> CheckResult:
    worst = math.inf
    for L, sa, n in ((0.3, 1.0, 2), (1.5, 2.0, 3), (0.05, 1.0, 5)):
        for kind in VR_KINDS:
            T = 4
            m = n
            rho = rho_floor(kind, L, sa, n=n, m=m, T=T)
            eta = select_eta(rho, sa, 1.0, 1.0)
            p = TheoryParams(L=L, sigma_a=sa, rho=rho, eta=eta, n=n, m=m, horizon=T)
            worst = min(worst, float(gamma_profile(kind, p).min()))
    return CheckResult("margin positivity at the penalty floor", worst > 0, f"min margin {worst:.3e}")


def _update_optimality(tiny: bool) -> CheckResult:
    rng = np.random.default_rng(3)
    worst_x, worst_y = 0.0, 0.0
    for trial in range(10 if tiny else 50):
        n, d = 6, 5
        X, y = make_synthetic(n, d, seed=trial)
        prob = make_problem(X, y, 1e-2, 1e-2)
        cfg = SolverConfig(algorithm="svrg", rho=float(rng.uniform(0.5, 5)), eta=float(rng.uniform(0.5, 5)))
        xb, v = rng.standard_normal(d), rng.standard_normal(d)
        lam = rng.standard_normal(prob.constraint.A.rows)
        yv = y_step(xb, lam, cfg.rho, prob)
        x = XUpdate(prob, cfg.rho, cfg.q_mode, cfg.eta)(xb, v, yv, lam, cfg.eta)
        S = prob.A.to_dense()
        r = S @ x - yv
        grad = v - S.T @ lam + cfg.rho * S.T @ r + cfg.eta * (x - xb)
        worst_x = max(worst_x, float(np.max(np.abs(grad))) / (1 + float(np.max(np.abs(v)))))
        worst_y = max(worst_y, y_optimality_residual(xb, yv, lam, cfg.rho, prob))
    ok = worst_x <= 1e-8 and worst_y <= 1e-10
    return CheckResult("update optimality", ok, f"x-step gradient {worst_x:.1e}, y-step residual {worst_y:.1e}")


def _replay_problem(tiny: bool) -> ProblemSpec:
    X, y = make_synthetic(40 if tiny else 200, 20, seed=0)
    return make_problem(X, y, 1e-4, 1.2e-4)


def _dual_and_residuals(tiny: bool) -> CheckResult:
    prob = _replay_problem(tiny)
    T = 200 if tiny else 1000
    worst, bad = 0.0, []
    for kind in (EstimatorKind.PLAIN, EstimatorKind.PLAIN_FIXED) + VR_KINDS:
        cfg = SolverConfig(algorithm=kind, iterations=T, seed=1, record_every=T)
        dual = DualIdentityReplay(prob, cfg)
        res = ResidualBoundReplay(prob, cfg)
        run(cfg, prob, observers=[dual, res])
        worst = max(worst, dual.max_error)
        for name, (v, tot) in res.summary().items():
            if v:
                bad.append(f"{kind.value}:{name} {v}/{tot}")
    ok = worst <= 1e-8 and not bad
    return CheckResult("dual identity and residual bounds", ok,
                       f"max dual error {worst:.1e}; bound violations: {', '.join(bad) or 'none'}")


def _plain_lower_bound(tiny: bool) -> CheckResult:
    prob = _replay_problem(tiny)
    T = 200 if tiny else 1000
    cfg = SolverConfig(algorithm="sadmm-f", iterations=T, seed=2, record_every=T)
    rep = PlainLowerBoundReplay(prob, cfg)
    run(cfg, prob, observers=[rep])
    v = rep.violations()
    return CheckResult("plain-estimator lower bound", v == 0, f"{v}/{len(rep.pairs)} violations")


# Constraint matrices of the enumeration instances.  The decrease argument
# uses sigma_A both as a lower bound on ||A dx||^2/||dx||^2 and on
# ||A^T dlam||^2/||dlam||^2, which needs A square and nonsingular; tall or
# wide A can show small expected increases.
TINY_A = (
    np.eye(2),
    np.array([[1.0, -1.0], [0.0, 1.0]]),
    np.array([[1.5, 0.5], [-0.5, 1.0]]),
)


def tiny_instance(A, n: int, seed: int, scale: float = 1.0, l1: float = 0.05, l2: float = 0.1) -> ProblemSpec:
    rng = np.random.default_rng(seed)
    X = scale * rng.standard_normal((n, 2))
    y = rng.choice([-1.0, 1.0], size=n)
    return make_problem(X, y, l1, l2, A=SparseMatrix.from_dense(A))


def enumeration_config(kind: EstimatorKind, problem: ProblemSpec, steps: int) -> SolverConfig:
    """``rho`` at the penalty floor and the margin-maximizing ``eta``."""
    sa = sigma_a(problem.A)
    rho = rho_floor(kind, problem.lipschitz, sa, n=problem.n, m=problem.n, T=steps)
    return SolverConfig(algorithm=kind, rho=rho, eta=select_eta(rho, sa, 1.0, 1.0),
                        iterations=problem.n * steps)


def _enumeration(tiny: bool) -> CheckResult:
    seeds = range(3) if tiny else range(10)
    cases = fails = viol = 0
    worst = -math.inf
    for kind in VR_KINDS:
        for A in TINY_A:
            for n in (2, 3):
                steps = 4 if (kind is EstimatorKind.SVRG or n == 2) else 3
                for seed in seeds:
                    prob = tiny_instance(A, n, seed)
                    cfg = enumeration_config(kind, prob, steps)
                    res = expected_lyapunov_oracle(kind, prob, cfg, steps)
                    scale = 1.0 + float(np.max(np.abs(res.expectations)))
                    rel = float(res.differences.max()) / scale
                    worst = max(worst, rel)
                    cases += 1
                    fails += rel > 1e-12
                    viol += res.lower_bound_violations
    ok = fails == 0 and viol == 0
    return CheckResult("exact-expectation Lyapunov decrease", ok,
                       f"{cases} instances, {fails} increases (largest relative step {worst:.1e}), "
                       f"{viol} lower-bound violations")


CHECKS: dict[str, Callable[[bool], CheckResult]] = {
    "estimator bounds": _estimator_bounds,
    "h/alpha recursions": _recursions,
    "margin positivity": _margin_positivity,
    "update optimality": _update_optimality,
    "dual identity and residual bounds": _dual_and_residuals,
    "plain-estimator lower bound": _plain_lower_bound,
    "exact-expectation Lyapunov decrease": _enumeration,
}


def run_checks(tiny: bool = False, only=None) -> list[CheckResult]:
    out = []
    for name, fn in CHECKS.items():
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        try:
            res = fn(tiny)
        except Exception as e:    # a crashing check is a failed check
            res = CheckResult(name, False, f"raised {type(e).__name__}: {e}")
        res.seconds = time.perf_counter() - t0
        out.append(res)
    return out
