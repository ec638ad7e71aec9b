"""Empirical curvature constants of |x|^p against the analytic bound, for 1 < p < 2.

Usage: python3 scripts/curvature_certificates.py [--trials 100000] [--seed 0]
"""
import argparse

import numpy as np

from otlab.costs import curvature_gamma


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--p", type=float, nargs="+", default=[1.1, 1.2, 1.3, 1.5, 1.8, 1.95])
    args = ap.parse_args()
    print(f"{'p':>5} {'empirical':>10} {'analytic':>10} {'p*sqrt(1+2^(3-2p))':>20}")
    for p in args.p:
        cert = curvature_gamma(p, args.trials, args.seed)
        alt = p * np.sqrt(1.0 + 2.0 ** (3.0 - 2.0 * p))
        print(f"{p:5.2f} {cert.gamma_empirical:10.4f} {cert.gamma_analytic:10.4f} {alt:20.4f}")


if __name__ == "__main__":
    main()
