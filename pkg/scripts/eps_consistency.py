"""Gap between entropic potentials and exact LP duals along the eps schedule.

Usage: python3 scripts/eps_consistency.py [--p 2] [--levels 16] [--atoms 200] [--seed 0]
"""
import argparse

import numpy as np

from otlab.config import DEFAULT_TARGETS
from otlab.costs import CostSpec
from otlab.dual import SolverOptions, exact_dual_oracle, solve_eps_schedule
from otlab.measures import make_discrete, sample_source


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--p", type=float, default=2.0)
    ap.add_argument("--levels", type=int, default=16)
    ap.add_argument("--atoms", type=int, default=200)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    quad = sample_source("uniform-box", 1, args.atoms, {"lo": [0.0], "hi": [1.0]}, 0, "grid-1d")
    # generic weights: round cumulative masses make the LP dual non-unique
    rng = np.random.default_rng(args.seed)
    mu = make_discrete(DEFAULT_TARGETS["points"], rng.uniform(0.5, 1.0, len(DEFAULT_TARGETS["points"])))
    spec = CostSpec(p=args.p)
    lp = exact_dual_oracle(quad, mu, spec)
    osc = float(np.ptp(lp.psi))
    print(f"{'eps':>10} {'iters':>6} {'sup gap / osc':>14}")
    for sol in solve_eps_schedule(quad, mu, spec, SolverOptions(levels=args.levels)):
        print(f"{sol.eps:10.3e} {sol.iters:6d} {np.max(np.abs(sol.psi - lp.psi)) / osc:14.3e}")


if __name__ == "__main__":
    main()
