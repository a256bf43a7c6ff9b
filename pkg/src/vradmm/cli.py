"""Command-line interface: ``solve``, ``bench``, ``check`` and ``params``.

Flags override config-file values.  ``--seed`` controls the index draws and
the random output index; the data itself is fixed by ``--data-seed``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .checks import run_checks
from .config import PRESETS, ConfigError, RunConfig, load_config
from .data import LibsvmFormatError, load_a9a, load_libsvm, make_problem, make_synthetic, split_half
from .engine import SolverConfig, run, theory_params
from .estimators import EstimatorKind
from .linalg import RankDeficientError, sigma_a, spectral_norm_sq
from .theory import SequenceOverflow, gamma_profile, rho_floor, select_eta
from .tracefile import format_bench, format_trace, write_bench, write_trace

log = logging.getLogger("vradmm")

ALL_ALGOS = ("sadmm", "sadmm-f", "svrg", "sag", "saga")


class CliError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument handling

def _add_run_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--data", help="'a9a', 'synthetic' or a LIBSVM file path")
    p.add_argument("--n", type=int, help="number of samples for a9a/synthetic (default 5000/200)")
    p.add_argument("--dim", type=int, default=20, help="synthetic feature dimension (default 20)")
    p.add_argument("--data-seed", type=int, default=0, help="seed of the data subset/generator")
    p.add_argument("--iters", type=int, help="iterations T")
    p.add_argument("--seed", type=int, help="seed of the index draws (required unless in config)")
    p.add_argument("--rho", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--m", type=int, help="SVRG epoch length (default n)")
    p.add_argument("--q-mode", choices=("identity", "uzawa"))
    p.add_argument("--lambda1", type=float)
    p.add_argument("--lambda2", type=float)
    p.add_argument("--preset", choices=sorted(PRESETS), help="regularization weights of a dataset")
    p.add_argument("--graph-threshold", type=float)
    p.add_argument("--diagnostics", action="store_true", default=None,
                   help="record theta, Lyapunov value and estimator variance")
    p.add_argument("--record-every", type=int, default=1)
    p.add_argument("--split", action="store_true", help="train on a seeded half, report test loss")
    p.add_argument("--timing", action="store_true", help="record wall-clock ms (not reproducible)")


def _merged_config(args, algo_flag: str | None) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    if args.preset:
        l1, l2 = PRESETS[args.preset]
        cfg = cfg.with_(lambda1=l1, lambda2=l2)
    over = {
        "algorithm": algo_flag,
        "rho": args.rho, "eta": args.eta, "m": args.m, "q_mode": args.q_mode,
        "iterations": args.iters, "seed": args.seed,
        "lambda1": args.lambda1, "lambda2": args.lambda2,
        "graph_threshold": args.graph_threshold, "data_path": args.data,
        "out_path": getattr(args, "out", None), "diagnostics": args.diagnostics,
    }
    return cfg.with_(**{k: v for k, v in over.items() if v is not None})


def _load_data(cfg: RunConfig, args):
    which = cfg.data_path or "synthetic"
    if which == "a9a":
        X, y, source = load_a9a(5000 if args.n is None else args.n, args.data_seed)
        if "surrogate" in source:
            log.warning("a9a file not found (set VRADMM_A9A or place data/a9a); using the a9a-like surrogate")
        return X, y
    if which == "synthetic":
        return make_synthetic(200 if args.n is None else args.n, args.dim, seed=args.data_seed)
    path = Path(which)
    if not path.is_file():
        raise CliError(f"data file not found: {path}")
    try:
        return load_libsvm(path).dense()
    except LibsvmFormatError as e:
        raise CliError(f"{path}: {e}") from None
    except OSError as e:
        raise CliError(f"cannot read {path}: {e.strerror or e}") from None


def _problems(cfg: RunConfig, args):
    X, y = _load_data(cfg, args)
    if not args.split:
        return make_problem(X, y, cfg.lambda1, cfg.lambda2, cfg.graph_threshold), None
    tr, te = split_half(X.shape[0], args.data_seed)
    train = make_problem(X[tr], y[tr], cfg.lambda1, cfg.lambda2, cfg.graph_threshold)
    test = make_problem(X[te], y[te], cfg.lambda1, cfg.lambda2, A=train.A)
    return train, test


def _solver(cfg: RunConfig, args, algorithm=None) -> SolverConfig:
    try:
        return cfg.solver(record_every=args.record_every, timing=args.timing,
                          **({} if algorithm is None else {"algorithm": algorithm}))
    except ConfigError:
        raise
    except ValueError as e:
        raise CliError(str(e)) from None


def _summary(name: str, tr) -> str:
    last = tr.records[-1]
    return (f"{name}: T={last.t} passes={tr.effective_passes:.4g} objective={last.objective:.10g} "
            f"r_grad={last.r_grad:.3e} r_feas={last.r_feas:.3e}")


# ---------------------------------------------------------------------------
# subcommands

def cmd_solve(args) -> int:
    cfg = _merged_config(args, args.algo)
    problem, test = _problems(cfg, args)
    sc = _solver(cfg, args)
    try:
        sc.validate(problem)
    except ValueError as e:
        raise CliError(str(e)) from None
    tr = run(sc, problem, test_problem=test)
    if cfg.out_path:
        write_trace(tr, cfg.out_path)
    else:
        sys.stdout.write(format_trace(tr))
    print(_summary(sc.algorithm.value, tr), file=sys.stderr)
    return 0


def _bench_one(job):
    sc, problem, test = job
    return run(sc, problem, test_problem=test)


def cmd_bench(args) -> int:
    cfg = _merged_config(args, None)
    problem, test = _problems(cfg, args)
    algos = [EstimatorKind.parse(a).value for a in (args.algos or ALL_ALGOS)]
    jobs = []
    for a in algos:
        sc = _solver(cfg, args, algorithm=a)
        try:
            sc.validate(problem)
        except ValueError as e:
            raise CliError(f"{a}: {e}") from None
        jobs.append((sc, problem, test))
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            traces = list(ex.map(_bench_one, jobs))
    else:
        traces = [_bench_one(j) for j in jobs]
    out = dict(zip(algos, traces))
    if cfg.out_path:
        write_bench(out, cfg.out_path)
    else:
        sys.stdout.write(format_bench(out))
    for a, tr in out.items():
        print(_summary(a, tr), file=sys.stderr)
    return 0


def cmd_check(args) -> int:
    results = run_checks(tiny=args.tiny)
    for r in results:
        print(r.line())
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"{len(failed)} invariant(s) failed: {', '.join(failed)}")
        return 1
    print(f"all {len(results)} invariants hold")
    return 0


def _fmt_or(fn, width=12) -> str:
    try:
        v = fn()
    except (SequenceOverflow, ArithmeticError, OverflowError):
        return "overflow".rjust(width)
    return f"{v:{width}.6g}"


def cmd_params(args) -> int:
    cfg = _merged_config(args, None)
    problem, _ = _problems(cfg, args)
    A = problem.A
    try:
        sa = sigma_a(A)
    except RankDeficientError as e:
        raise CliError(str(e)) from None
    a2 = spectral_norm_sq(A).value
    L = problem.lipschitz
    n = problem.n
    T = cfg.iterations
    print(f"samples n          {n}")
    print(f"dimension d        {problem.dimension}")
    print(f"rows of A          {A.rows}")
    print(f"L                  {L:.10g}")
    print(f"sigma_A            {sa:.10g}")
    print(f"||A||_2^2          {a2:.10g}")
    print(f"rho, eta (config)  {cfg.rho:g}, {cfg.eta:g}")
    print(f"eta* at rho        {select_eta(cfg.rho, sa, 1.0, 1.0):.6g}")
    m = cfg.m or n
    print(f"\npenalty floor (m={m}, T={T}) and margins at the configured rho, eta:")
    print(f"{'algorithm':10s} {'rho_floor':>12s} {'eta*(floor)':>12s} {'min margin':>12s}  feasible")
    for kind in (EstimatorKind.SVRG, EstimatorKind.SAG, EstimatorKind.SAGA):
        floor = _fmt_or(lambda: rho_floor(kind, L, sa, n=n, m=m, T=T))
        try:
            fl = rho_floor(kind, L, sa, n=n, m=m, T=T)
            eta_f = f"{select_eta(fl, sa, 1.0, 1.0):12.6g}"
        except (SequenceOverflow, ArithmeticError, OverflowError):
            eta_f = "overflow".rjust(12)
        sc = SolverConfig(algorithm=kind, rho=cfg.rho, eta=cfg.eta, m=cfg.m, iterations=max(T, 1))
        try:
            g = float(gamma_profile(kind, theory_params(problem, sc)).min())
            margin, feas = f"{g:12.4g}", "yes" if g > 0 else "no"
        except (SequenceOverflow, ArithmeticError, OverflowError):
            margin, feas = "overflow".rjust(12), "no"
        print(f"{kind.value:10s} {floor} {eta_f} {margin}  {feas}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vradmm", description="Variance-reduced stochastic ADMM")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="run one algorithm and write its trace")
    _add_run_args(s)
    s.add_argument("--algo", help=f"one of {', '.join(ALL_ALGOS)}")
    s.add_argument("--out", help="trace CSV path (default stdout)")
    s.set_defaults(func=cmd_solve)

    b = sub.add_parser("bench", help="run several algorithms on shared data and seed")
    _add_run_args(b)
    b.add_argument("--algos", nargs="+", help=f"subset of {', '.join(ALL_ALGOS)} (default all)")
    b.add_argument("--out", help="combined CSV path (default stdout)")
    b.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    b.set_defaults(func=cmd_bench)

    c = sub.add_parser("check", help="run the invariant suite")
    c.add_argument("--tiny", action="store_true", help="small instances only (seconds)")
    c.set_defaults(func=cmd_check)

    q = sub.add_parser("params", help="print problem constants and parameter feasibility")
    _add_run_args(q)
    q.set_defaults(func=cmd_params)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        # the tall-A orientation notice is expected for graph-guided problems
        logging.getLogger("vradmm.linalg").setLevel(logging.ERROR)
    try:
        if args.command in ("solve", "bench") and args.seed is None:
            seed = load_config(args.config).seed if args.config else None
            if seed is None:
                raise CliError("--seed is required (or set 'seed' in the config)")
        return args.func(args)
    except (CliError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
