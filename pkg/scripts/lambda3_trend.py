"""Ground-state energy and gradient norm as lambda3 -> 0- at fixed mass.

    python3 scripts/lambda3_trend.py --out results/lambda3.csv
"""
import argparse
import csv
import os

from dipolar_gs.minimizer import minimize, verify_claims
from dipolar_gs.params import ModelParams, derive_geometry


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lambda3", type=float, nargs="+", default=[-1.0, -0.5, -0.25, -0.1, -0.05])
    ap.add_argument("--mass-fraction", type=float, default=0.5,
                    help="mass as a fraction of c_star at the first lambda3")
    ap.add_argument("--n", type=int, default=64)
    ap.add_argument("--out", default="results/lambda3.csv")
    args = ap.parse_args()

    base = ModelParams(-1.0, -0.05, args.lambda3[0], 3.0, 1.0)
    c = args.mass_fraction * derive_geometry(base).c_star
    rows = []
    for l3 in args.lambda3:
        params = ModelParams(base.lambda1, base.lambda2, l3, base.p, c)
        res = minimize(params)
        rep = verify_claims(res)
        rows.append((l3, res.energy, res.grad_l2, res.mu, res.iterations, rep.ok))
        print(f"lambda3={l3:<6g} E={res.energy:.6e} |grad u|={res.grad_l2:.6e} mu={res.mu:.6e} claims_ok={rep.ok}")
    os.makedirs(os.path.dirname(args.out) or ".", exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["lambda3", "energy", "grad_l2", "mu", "iterations", "claims_ok"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
