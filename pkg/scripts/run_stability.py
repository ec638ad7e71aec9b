"""Sweep p and print fitted stability exponents for potentials and maps.

Usage: python3 scripts/run_stability.py [--p 1.5 2 3] [--levels 6] [--out DIR]
"""
import argparse
from pathlib import Path

from otlab.config import DEFAULT_TARGETS
from otlab.costs import CostSpec
from otlab.measures import make_discrete, sample_source
from otlab.stability import default_suite, run_map_stability, run_potential_stability


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, nargs="+", default=[1.5, 2.0, 3.0])
    ap.add_argument("--levels", type=int, default=6)
    ap.add_argument("--delta", type=float, default=0.1)
    ap.add_argument("--m", type=int, default=2000)
    ap.add_argument("--out", type=Path)
    args = ap.parse_args()

    quad = sample_source("uniform-box", 1, args.m, {"lo": [0.0], "hi": [1.0]}, 0, "grid-1d")
    base = make_discrete(DEFAULT_TARGETS["points"], DEFAULT_TARGETS["weights"])
    family = default_suite(base, args.levels, args.delta, 0, [0.0], [1.0])
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    print(f"{'kind':>4} {'p':>5} {'theta_fit':>10} {'stderr':>8} {'theta_theory':>12} {'violations':>10}")
    for p in args.p:
        spec = CostSpec(p=p)
        for rep in (run_potential_stability(quad, family, spec), run_map_stability(quad, family, spec)):
            print(f"{rep.kind:>4} {p:5.2f} {rep.theta_fit:10.4f} {rep.theta_stderr:8.4f} "
                  f"{rep.theta_theory:12.4f} {rep.bound_violations:10d}")
            if args.out:
                (args.out / f"{rep.kind}_p{p:g}.csv").write_text(rep.to_csv())


if __name__ == "__main__":
    main()
