"""Cauchy study of Wick powers: ensemble-mean ||X_N^k - X_2N^k|| against N.

    python scripts/wick_convergence.py --kind heat --k 2 --alpha -0.5 --gamma 1
    python scripts/wick_convergence.py --kind wave --k 3 --alpha -0.1
"""

import argparse
import os

from wickspde.subordinator import SubordinatorSpec
from wickspde.wick import NormSpec, cauchy_convergence_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", choices=("heat", "wave"), default="heat")
    ap.add_argument("--k", type=int, default=2)
    ap.add_argument("--alpha", type=float, default=-0.5)
    ap.add_argument("--gamma", type=float, default=None, help="L^gamma time norm; omit for sup in time")
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--cutoffs", type=int, nargs="+", default=[4, 8, 16, 32])
    ap.add_argument("--paths", type=int, default=20)
    ap.add_argument("--rate", type=float, default=1.0, help="Poisson rate of the subordinator")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", default="results/wick_convergence")
    args = ap.parse_args()

    rep = cauchy_convergence_study(args.kind, args.k, args.cutoffs, NormSpec(args.alpha, args.gamma, eps=args.eps),
                                   args.paths, args.seed, SubordinatorSpec("poisson", rate=args.rate),
                                   workers=args.workers)
    os.makedirs(args.out, exist_ok=True)
    stem = os.path.join(args.out, f"{args.kind}_k{args.k}")
    with open(stem + ".csv", "w", newline="") as fh:
        fh.write(rep.to_csv())
    with open(stem + ".json", "w") as fh:
        fh.write(rep.to_json())
    for n, m, s in zip(rep.cutoffs, rep.means, rep.ses):
        print(f"N={n:4d}  mean={m:.6g}  se={s:.2g}")
    print(f"slope {rep.slope:.3f}")


if __name__ == "__main__":
    main()
