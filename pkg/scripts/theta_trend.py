"""Scaling of min_{t<=T} theta_t with the horizon T.

Each horizon is a separate run, since the parameters depend on T.  For
an O(1/T) rate the product T * min theta stays bounded.  The script also
prints the index where the minimum is attained, which shows whether the
minimum comes from the tail or from the first few iterations.

    python3 scripts/theta_trend.py --horizons 2000 4000 8000 16000
"""

import argparse

import numpy as np

from vradmm.data import make_problem, make_synthetic
from vradmm.engine import SolverConfig, run
from vradmm.estimators import EstimatorKind


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--d", type=int, default=20)
    ap.add_argument("--horizons", type=int, nargs="+", default=[2000, 4000, 8000])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    X, y = make_synthetic(args.n, args.d, seed=0)
    p = make_problem(X, y, 1e-4, 1.2e-4)
    print(f"{'algo':>5} {'T':>6} {'min theta':>11} {'argmin':>6} {'T*min':>10} {'tail min':>11} {'T*tail':>10}")
    for kind in (EstimatorKind.SVRG, EstimatorKind.SAG, EstimatorKind.SAGA):
        for T in args.horizons:
            tr = run(SolverConfig(algorithm=kind, iterations=T, seed=args.seed, record_every=T), p,
                     track_theta=True)
            th = tr.theta
            k = int(np.argmin(th))
            # minimum over the second half only, away from the start-up transient
            tail = float(th[len(th) // 2:].min())
            print(f"{kind.value:>5} {T:6d} {th[k]:11.4e} {k + 1:6d} {T * th[k]:10.4e} {tail:11.4e} {T * tail:10.4e}")


if __name__ == "__main__":
    main()
