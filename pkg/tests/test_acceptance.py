"""Acceptance criteria, one test per criterion at its stated tolerance.

Every test records a ``CRITERION k PASS|FAIL`` line that is printed in the
terminal summary, then asserts.
"""
import time

import numpy as np
import pytest

from otlab.cli import main
from otlab.config import DEFAULT_TARGETS
from otlab.costs import CostSpec, cost_matrix, curvature_gamma, semiconcavity_check, shifted_spec
from otlab.dual import (
    SolverOptions,
    exact_dual_oracle,
    potential_gradients,
    primal_entropic_value,
    solve_eps_schedule,
)
from otlab.inequalities import p_lambda_concavity_check
from otlab.measures import make_discrete, sample_source
from otlab.stability import default_suite, run_map_stability, run_potential_stability
from otlab.verify import (
    derivative_errors,
    midpoint_deficit,
    modified_midpoint,
    random_problem,
    suite_displacement,
    suite_reverse_poincare,
)

pytestmark = pytest.mark.acceptance

UNIT = {"lo": [0.0], "hi": [1.0]}


def gamma_formula(p):
    """Analytic curvature constant exactly as stated by the criteria."""
    return p * np.sqrt(1.0 + 2.0 ** (3.0 - 2.0 * p))


def record(log, k, ok, detail):
    log[k] = f"CRITERION {k:2d} {'PASS' if ok else 'FAIL'}: {detail}"
    return ok


def unit_source(d, m, seed=0, kind=None):
    kind = kind or ("grid-1d" if d == 1 else "monte-carlo")
    return sample_source("uniform-box", d, m, {"lo": [0.0] * d, "hi": [1.0] * d}, seed, kind)


def default_measure():
    return make_discrete(DEFAULT_TARGETS["points"], DEFAULT_TARGETS["weights"])


def separated_points(rng, n, d, sep):
    while True:
        Y = rng.uniform(0.05, 0.95, (n, d))
        D = np.linalg.norm(Y[:, None] - Y[None], axis=-1) + np.eye(n)
        if D.min() >= sep:
            return Y


def test_criterion_01_derivatives(criterion_log):
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = {}
    for k in range(50):
        d = 1 + k % 2
        n = int(rng.integers(2, 21))
        m = int(rng.integers(50, 501))
        quad, mu = random_problem(rng, d, n, m)
        spec = CostSpec(p=float(rng.choice([1.5, 2.0, 3.0])))
        eps = [1.0, 0.1, 0.01][k % 3]
        psi = rng.normal(scale=0.2, size=n)
        errs = derivative_errors(quad, mu, spec, eps, psi, rng.normal(size=n))
        for key, val in errs.items():
            worst[key] = max(worst.get(key, 0.0), val)
    elapsed = time.perf_counter() - t0
    top = max(worst.values())
    ok = top <= 1e-5 and elapsed <= 30.0
    record(criterion_log, 1, ok, f"max rel error {top:.2e} over 50 instances in {elapsed:.1f}s")
    assert top <= 1e-5, worst
    assert elapsed <= 30.0


def test_criterion_02_solver_optimality(criterion_log):
    rng = np.random.default_rng(0)
    cases = [(1, 4, 2000, 2.0), (1, 50, 2000, 2.0), (2, 20, 2000, 1.5), (1, 12, 1000, 3.0), (2, 50, 1500, 2.0)]
    worst_res = worst_gap = 0.0
    for d, n, m, p in cases:
        quad = unit_source(d, m)
        mu = make_discrete(rng.uniform(0, 1, (n, d)), rng.uniform(0.5, 1, n))
        spec = CostSpec(p=p)
        sols = solve_eps_schedule(quad, mu, spec)
        worst_res = max(worst_res, max(s.residual for s in sols))
        C = cost_matrix(spec, quad.nodes, mu.points)
        for s in (sols[0], sols[len(sols) // 2], sols[-1]):
            primal = primal_entropic_value(quad.weights, mu.weights, C, s.eps, tol=1e-10)
            worst_gap = max(worst_gap, abs(primal - s.objective))
    ok = worst_res <= 1e-8 and worst_gap <= 1e-6
    record(criterion_log, 2, ok, f"max residual {worst_res:.2e}, max primal gap {worst_gap:.2e}")
    assert worst_res <= 1e-8
    assert worst_gap <= 1e-6


def test_criterion_03_eps_to_zero(criterion_log):
    rng = np.random.default_rng(3)
    opts = SolverOptions(levels=16)
    worst = 0.0
    for k in range(10):
        d = 1 if k < 6 else 2
        n = int(rng.integers(3, 8))
        p = [1.5, 2.0, 3.0][k % 3]
        quad = unit_source(d, 200, kind="grid-1d") if d == 1 else unit_source(2, 14, kind="grid-tensor")
        mu = make_discrete(separated_points(rng, n, d, 0.1), rng.uniform(0.5, 1, n))
        spec = CostSpec(p=p)
        sol = solve_eps_schedule(quad, mu, spec, opts)[-1]
        lp = exact_dual_oracle(quad, mu, spec)
        worst = max(worst, float(np.max(np.abs(sol.psi - lp.psi)) / np.ptp(lp.psi)))
    ok = worst <= 0.01
    record(criterion_log, 3, ok, f"max sup gap / osc(psi_LP) {worst:.2e} on 10 instances")
    assert ok


def test_criterion_04_logconcavity(criterion_log):
    rng = np.random.default_rng(4)
    quad = sample_source("uniform-box", 1, 400, {"lo": [-1.0], "hi": [1.0]}, 0, "grid-1d")
    specs = [CostSpec(p=2.0, variant="linear_ell")] + [shifted_spec(p, quad.r_x, 1.0) for p in (2.0, 2.5, 3.0)]
    worst = -np.inf
    for spec in specs:
        for _ in range(100):
            n = int(rng.integers(2, 8))
            mu = make_discrete(rng.uniform(-1, 1, (n, 1)), radius=1.0)
            eps = float(rng.choice([1.0, 0.5, 0.2, 0.05]))
            beta = float(rng.choice([0.5, 1.0, 2.0]))
            psi0, psi1 = rng.normal(scale=0.5, size=(2, n))
            worst = max(worst, midpoint_deficit(quad, mu, spec, eps, beta, psi0, psi1, float(rng.uniform())))
    ok = worst <= 1e-10
    record(criterion_log, 4, ok, f"max midpoint deficit {worst:.2e} over 4 x 100 triples")
    assert ok


def test_criterion_05_modified_logconcavity(criterion_log):
    rng = np.random.default_rng(5)
    quad = sample_source("uniform-box", 1, 400, {"lo": [-1.0], "hi": [1.0]}, 0, "grid-1d")
    worst = np.inf
    for p in (1.2, 1.5, 1.8):
        spec = CostSpec(p=p)
        gamma = gamma_formula(p)
        for _ in range(100):
            n = int(rng.integers(2, 8))
            mu = make_discrete(rng.uniform(-1, 1, (n, 1)))
            eps = float(rng.choice([1.0, 0.5, 0.2, 0.05]))
            beta = float(rng.choice([0.5, 1.0, 2.0]))
            psi0, psi1 = rng.normal(scale=0.5, size=(2, n))
            t = float(rng.uniform())
            deficit, wp = modified_midpoint(quad, mu, spec, eps, beta, psi0, psi1, t)
            worst = min(worst, beta * t * (1 - t) * gamma * wp + 1e-8 - deficit)
    ok = worst >= 0
    record(criterion_log, 5, ok, f"min slack {worst:.2e} over 3 x 100 triples")
    assert ok


def test_criterion_06_theorem_constants(criterion_log):
    quad = unit_source(1, 2000)
    family = default_suite(default_measure(), 6, 0.1, 0, UNIT["lo"], UNIT["hi"])
    details, ok = [], len(family) == 18
    for p in (2.0, 2.5, 3.0):
        rep = run_potential_stability(quad, family, CostSpec(p=p))
        done = sum(r.completed for r in rep.records)
        ok = ok and rep.bound_violations == 0 and done == 18
        details.append(f"p={p:g}: {rep.bound_violations} violations/{done} records")
    record(criterion_log, 6, ok, ", ".join(details))
    assert ok


def test_criterion_07_exponent_recovery(criterion_log):
    quad = unit_source(1, 2000)
    family = default_suite(default_measure(), 6, 0.1, 0, UNIT["lo"], UNIT["hi"])
    details, ok = [], True
    for p in (1.5, 2.0, 3.0):
        spec = CostSpec(p=p)
        for rep in (run_potential_stability(quad, family, spec), run_map_stability(quad, family, spec)):
            good = bool(rep.theta_fit >= rep.theta_theory - 0.1)
            ok = ok and good
            details.append(f"{rep.kind} p={p:g} fit {rep.theta_fit:.3f} vs {rep.theta_theory:.3f}")
    record(criterion_log, 7, ok, "; ".join(details))
    assert ok


def test_criterion_08_curvature(criterion_log):
    rng = np.random.default_rng(8)
    details, ok = [], True
    for p in (1.2, 1.5, 1.8):
        gamma = gamma_formula(p)
        cert = curvature_gamma(p, 100_000, 0)
        x0 = rng.normal(size=(100_000, 2)) * rng.exponential(size=(100_000, 1))
        x1 = rng.normal(size=(100_000, 2))
        slack = float(np.min(semiconcavity_check(p, gamma, x0, x1, rng.uniform(size=100_000))))
        good = bool(cert.gamma_empirical <= gamma and slack >= -1e-12)
        ok = ok and good
        details.append(f"p={p:g} empirical {cert.gamma_empirical:.4f} vs {gamma:.4f}, slack {slack:.1e}")
    record(criterion_log, 8, ok, "; ".join(details))
    assert ok, "; ".join(details)


def test_criterion_09_displacement(criterion_log):
    res = suite_displacement(seed=9, pairs=20, grid=2000)
    ok = res.max_violation <= 1e-6
    record(criterion_log, 9, ok, f"max violation {res.max_violation:.2e} on 20 pairs")
    assert ok


def test_criterion_10_reverse_poincare(criterion_log):
    res = suite_reverse_poincare(seed=10, pairs=100)
    slack = -res.max_violation
    ok = slack >= -1e-6
    record(criterion_log, 10, ok, f"min slack {slack:.3e} on 100 pairs")
    assert ok


def test_criterion_11_p_lambda_concavity(criterion_log):
    rng = np.random.default_rng(11)
    sources = [(unit_source(1, 2000), default_measure()), (unit_source(2, 1024), make_discrete(rng.uniform(0, 1, (6, 2))))]
    worst = -np.inf
    for p in (1.2, 1.5, 1.8):
        spec = CostSpec(p=p)
        lam = 2.0 * gamma_formula(p) / p**2
        for quad, mu in sources:
            sol = solve_eps_schedule(quad, mu, spec)[-1]
            grads = potential_gradients(sol, quad, mu, spec)
            worst = max(worst, p_lambda_concavity_check(quad.nodes, grads, p, lam))
    ok = worst <= 1e-6
    record(criterion_log, 11, ok, f"max violation {worst:.2e}")
    assert ok


def test_criterion_12_determinism(criterion_log, tmp_path):
    import json

    cfg = {"experiment": "solve", "seed": 7, "cost": {"p": 2.0},
           "source": {"kind": "uniform-box", "d": 2, "m": 400, "quadrature": "monte-carlo",
                      "params": {"lo": [0.0, 0.0], "hi": [1.0, 1.0]}},
           "targets": {"points": [[0.2, 0.3], [0.7, 0.6], [0.5, 0.9]], "family": {"levels": 4}}}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    files = {"solve": ["psi.csv", "phi.csv"], "stability-pot": ["report.csv"], "stability-map": ["report.csv"]}
    same = True
    for cmd, names in files.items():
        for run in ("a", "b"):
            assert main([cmd, "--config", str(path), "--out", str(tmp_path / f"{cmd}-{run}")]) == 0
        for name in names:
            same = same and (tmp_path / f"{cmd}-a" / name).read_bytes() == (tmp_path / f"{cmd}-b" / name).read_bytes()
    record(criterion_log, 12, same, "CSV outputs byte-identical across repeated runs")
    assert same
