"""Second moment of the stationary heat field at two times, over many seeds."""

import argparse
import math

import numpy as np

from wickspde.linfield import stationary_convolution
from wickspde.subordinator import SubordinatorSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--kind", choices=("heat-stationary", "damped-wave-stationary"), default="heat-stationary")
    ap.add_argument("--cutoff", type=int, default=4)
    ap.add_argument("--times", type=float, nargs=2, default=[0.5, 1.5])
    ap.add_argument("--past", type=float, default=8.0)
    ap.add_argument("--samples", type=int, default=2000)
    args = ap.parse_args()
    spec = SubordinatorSpec("gamma")
    sq = np.array([stationary_convolution(args.kind, spec, args.cutoff, args.times, args.past, seed=s)[0]
                   .values_at((0.0, 0.0))[0] ** 2 for s in range(args.samples)])
    d = sq[:, 0] - sq[:, 1]
    for t, col in zip(args.times, sq.T):
        print(f"t={t:g}  E[X^2]={col.mean():.5f} +- {col.std(ddof=1) / math.sqrt(col.size):.5f}")
    print(f"paired z = {d.mean() / (d.std(ddof=1) / math.sqrt(d.size)):+.2f}")


if __name__ == "__main__":
    main()
