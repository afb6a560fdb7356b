"""Integrated heat constant I(N) = int_0^T c_N(t) dt for L(t) = t.

I(2N) - I(N) stays near (T/2) ln 2 / (2 pi), so I(N) grows like log N and the
limiting linear field is not square integrable in space-time.
"""

import argparse
import math

from wickspde.linfield import integrated_heat_constant


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--horizon", type=float, default=1.0)
    ap.add_argument("--cutoffs", type=int, nargs="+", default=[8, 16, 32, 64, 128, 256, 512])
    args = ap.parse_args()
    limit = args.horizon / 2 * math.log(2) / (2 * math.pi)
    print(f"{'N':>5}  {'I(N)':>12}  {'I(2N)-I(N)':>12}  limit {limit:.6f}")
    for n in args.cutoffs:
        a, b = integrated_heat_constant(n, args.horizon), integrated_heat_constant(2 * n, args.horizon)
        print(f"{n:5d}  {a:12.6f}  {b - a:12.6f}")


if __name__ == "__main__":
    main()
