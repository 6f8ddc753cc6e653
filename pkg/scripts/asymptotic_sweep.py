"""Small-mass sweep of the dipolar instance: normalized ratios against their limits.

    python3 scripts/asymptotic_sweep.py --out results/sweep
"""
import argparse
import json
import os

from dipolar_gs.experiments import asymptotic_sweep, sweep_summary, write_sweep_csv
from dipolar_gs.params import ModelParams, derive_geometry


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambda1", type=float, default=-1.0)
    ap.add_argument("--lambda2", type=float, default=-0.05)
    ap.add_argument("--lambda3", type=float, default=-1.0)
    ap.add_argument("--p", type=float, default=3.0)
    ap.add_argument("--fractions", type=float, nargs="+", default=[1 / 2, 1 / 4, 1 / 8, 1 / 16, 1 / 32])
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--physical", action="store_true", help="solve in physical instead of rescaled coordinates")
    ap.add_argument("--out", default="results/sweep")
    args = ap.parse_args()

    template = ModelParams(args.lambda1, args.lambda2, args.lambda3, args.p, 1.0)
    c_star = derive_geometry(template).c_star
    records = asymptotic_sweep(template, [f * c_star for f in args.fractions], n=args.n,
                               rescaled=not args.physical)
    summary = sweep_summary(records, template)
    os.makedirs(args.out, exist_ok=True)
    write_sweep_csv(records, os.path.join(args.out, "sweep.csv"))
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump({**summary, "c_star": c_star, "records": [r.to_dict() for r in records]}, fh, indent=2)

    keys = list(summary["targets"])
    print("c/c*      " + "  ".join(f"{k:>13s}" for k in keys) + "        h1_rel")
    for f, r in zip(args.fractions, records):
        print(f"{f:<9.5g} " + "  ".join(f"{getattr(r, k):13.6e}" for k in keys) + f"  {r.h1_rel:12.4e}")
    print("limit     " + "  ".join(f"{summary['targets'][k]:13.6e}" for k in keys))
    print(f"b_ratio slope {summary['b_ratio_slope']:.4f} (expected {summary['b_ratio_slope_expected']:g})")


if __name__ == "__main__":
    main()
