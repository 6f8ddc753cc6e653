"""Check the well geometry on random instances of the unstable regime.

    python3 scripts/geometry_suite.py --count 5000
"""
import argparse
import math

import numpy as np

from dipolar_gs.params import ModelParams, derive_geometry


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=1000)
    ap.add_argument("--exponents", type=int, default=8, help="distinct p values in (2, 10/3)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    ps = rng.uniform(2.05, 3.33, args.exponents)
    failures, worst_gap = [], math.inf
    for i in range(args.count):
        l2 = rng.uniform(-1.0, 1.0)
        thr = 4 * math.pi / 3 * l2 if l2 <= 0 else -8 * math.pi / 3 * l2
        l1 = thr - rng.uniform(0.01, 3.0)
        l3 = -rng.uniform(0.05, 3.0)
        p = float(ps[i % len(ps)])
        c_star = derive_geometry(ModelParams(l1, l2, l3, p, 1.0)).c_star
        g = derive_geometry(ModelParams(l1, l2, l3, p, rng.uniform(0.001, 0.999) * c_star))
        if not g.ordering_holds():
            failures.append(g.params)
        worst_gap = min(worst_gap, g.R0_excess)
    print(f"{args.count} instances, {len(failures)} ordering failures, smallest R0/bar-t - 1 = {worst_gap:.3e}")
    for prm in failures[:10]:
        print("  failed:", prm)


if __name__ == "__main__":
    main()
