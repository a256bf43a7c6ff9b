"""Final objective after a fixed number of effective passes, per seed.

Compares S-ADMM against SVRG-ADMM and SAGA-ADMM on an a9a subset (the
real file when ``VRADMM_A9A`` or ``--path`` points to it, otherwise the
structured surrogate).

    python3 scripts/a9a_ordering.py --n 5000 --passes 30 --seeds 10
"""

import argparse
import time

import numpy as np

from vradmm.data import load_a9a, make_problem
from vradmm.engine import SolverConfig, iterations_for_passes, run
from vradmm.estimators import EstimatorKind

ALGOS = (EstimatorKind.PLAIN, EstimatorKind.SVRG, EstimatorKind.SAGA, EstimatorKind.SAG)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--n", type=int, default=5000)
    ap.add_argument("--passes", type=float, default=30.0)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--path", default=None)
    args = ap.parse_args()

    X, y, source = load_a9a(args.n, seed=0, path=args.path)
    p = make_problem(X, y, 1e-4, 1.2e-4)
    print(f"data: {source}, n={p.n}, d={p.d}, A rows={p.A.rows}")
    print("seed " + " ".join(f"{k.value:>10}" for k in ALGOS))
    finals = {k: [] for k in ALGOS}
    t0 = time.perf_counter()
    for seed in range(args.seeds):
        row = []
        for kind in ALGOS:
            T = iterations_for_passes(kind, p.n, args.passes)
            tr = run(SolverConfig(algorithm=kind, iterations=T, seed=seed, record_every=max(T, 1)), p)
            finals[kind].append(tr.records[-1].objective)
            row.append(finals[kind][-1])
        print(f"{seed:4d} " + " ".join(f"{v:10.6f}" for v in row))
    print("mean " + " ".join(f"{np.mean(finals[k]):10.6f}" for k in ALGOS))
    base = np.array(finals[EstimatorKind.PLAIN])
    for k in ALGOS[1:]:
        wins = int(np.sum(np.array(finals[k]) < base))
        print(f"{k.value} below S-ADMM on {wins}/{args.seeds} seeds")
    print(f"{time.perf_counter() - t0:.0f}s")


if __name__ == "__main__":
    main()
