"""Invariant battery behind ``otlab verify``: each suite returns its worst observed violation."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, List, Optional

import numpy as np

from .costs import CostSpec, curvature_gamma, gamma_analytic, semiconcavity_check, shifted_spec
from .entropic import (
    c_eps_transform,
    conditional_plan,
    grad_K,
    grad_log_I,
    hess_K_quadform,
    kantorovich_K,
    log_I_hess_quadform,
    log_partition_I,
    tilted_quadrature,
)
from .errors import ConfigError
from .inequalities import (
    displacement_bound_1d,
    gn_calibrate,
    gn_interp_check_1d,
    reverse_poincare_1d,
    smoothed_random_walk,
)
from .measures import DiscreteMeasure, SourceQuadrature, make_discrete, sample_source, wp_power


@dataclass(frozen=True)
class SuiteResult:
    name: str
    passed: bool
    max_violation: float
    detail: str = ""

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "max_violation", float(self.max_violation))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: max violation {self.max_violation:.3e} {self.detail}".rstrip()


# ---------------------------------------------------------------------------
# random instances and finite differences
# ---------------------------------------------------------------------------


def random_problem(rng: np.random.Generator, d: int = 1, n: int = 5, m: int = 200, box: float = 1.0):
    """Uniform source on ``[-box, box]^d`` (Gauss grid in 1D) and ``n`` random atoms with random sigma."""
    params = {"lo": [-box] * d, "hi": [box] * d}
    seed = int(rng.integers(2**31))
    quad = sample_source("uniform-box", d, m, params, seed, "grid-1d" if d == 1 else "monte-carlo")
    Y = rng.uniform(-box, box, size=(n, d))
    mu = make_discrete(Y, rng.uniform(0.2, 1.0, n), rng.uniform(0.2, 1.0, n))
    return quad, mu


def fd_step(psi: np.ndarray) -> float:
    return 1e-6 * (1.0 + float(np.max(np.abs(psi))))


def central_gradient(f: Callable[[np.ndarray], float], psi: np.ndarray, h: float) -> np.ndarray:
    out = np.empty_like(psi)
    for i in range(len(psi)):
        e = np.zeros_like(psi)
        e[i] = h
        out[i] = (f(psi + e) - f(psi - e)) / (2 * h)
    return out


def rel_error(analytic, numeric) -> float:
    """``max |a - b| / max |b|``: error relative to the size of the reference."""
    a, b = np.atleast_1d(np.asarray(analytic, float)), np.atleast_1d(np.asarray(numeric, float))
    scale = float(np.max(np.abs(b)))
    return float(np.max(np.abs(a - b))) / (scale if scale > 0 else 1.0)


def derivative_errors(quad: SourceQuadrature, mu: DiscreteMeasure, spec: CostSpec, eps: float,
                      psi: np.ndarray, v: np.ndarray, beta: float = 1.0) -> Dict[str, float]:
    """Relative errors of every analytic derivative against central differences.

    Hessian quadratic forms are compared with the difference quotient of the
    (separately checked) gradient along ``v``.
    """
    h = fd_step(psi)
    out = {}
    K = lambda s: kantorovich_K(s, quad, mu, spec, eps)
    g = grad_K(psi, quad, mu, spec, eps)
    out["grad_K"] = rel_error(g, central_gradient(K, psi, h))
    dg = (grad_K(psi + h * v, quad, mu, spec, eps) - grad_K(psi - h * v, quad, mu, spec, eps)) / (2 * h)
    out["hess_K_quadform"] = rel_error(hess_K_quadform(psi, v, quad, mu, spec, eps), float(v @ dg))
    P = conditional_plan(psi, mu, None, spec, eps, quad).matrix
    nodes = quad.nodes[:: max(1, quad.m // 5)]
    worst = 0.0
    for x in nodes:
        f = lambda s: c_eps_transform(s, mu, None, spec, eps, x)
        fd = -central_gradient(f, psi, h)
        j = int(np.argmin(np.linalg.norm(quad.nodes - x, axis=1)))
        worst = max(worst, rel_error(P[j], fd))
    out["conditional_plan"] = worst
    L = lambda s: log_partition_I(s, quad, mu, spec, eps, beta)
    gl = grad_log_I(psi, quad, mu, spec, eps, beta)
    out["grad_log_I"] = rel_error(gl, central_gradient(L, psi, h))
    dgl = (grad_log_I(psi + h * v, quad, mu, spec, eps, beta) - grad_log_I(psi - h * v, quad, mu, spec, eps, beta)) / (2 * h)
    out["log_I_hess_quadform"] = rel_error(log_I_hess_quadform(psi, v, quad, mu, spec, eps, beta), float(v @ dgl))
    return out


def midpoint_deficit(quad, mu, spec, eps, beta, psi0, psi1, t) -> float:
    f = lambda s: log_partition_I(s, quad, mu, spec, eps, beta)
    return (1 - t) * f(psi0) + t * f(psi1) - f((1 - t) * psi0 + t * psi1)


def modified_midpoint(quad, mu, spec, eps, beta, psi0, psi1, t):
    """``(deficit, W_p^p)`` where ``W_p^p`` is the unit-scale p-cost between the two tilted sources."""
    deficit = midpoint_deficit(quad, mu, spec, eps, beta, psi0, psi1, t)
    a = tilted_quadrature(psi0, quad, mu, spec, eps, beta).as_measure()
    b = tilted_quadrature(psi1, quad, mu, spec, eps, beta).as_measure()
    return deficit, wp_power(a, b, spec.p)


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------


def suite_hessians(seed: int = 0, instances: int = 12, tol: float = 1e-5, **_) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(instances):
        d = 1 + k % 2
        quad, mu = random_problem(rng, d, int(rng.integers(2, 9)), 200)
        spec = CostSpec(p=float(rng.choice([1.5, 2.0, 3.0])))
        eps = float([1.0, 0.1, 0.01][k % 3])
        psi = rng.normal(scale=0.2, size=mu.n)
        v = rng.normal(size=mu.n)
        errs = derivative_errors(quad, mu, spec, eps, psi, v)
        worst = max(worst, max(errs.values()))
    return SuiteResult("hessians", worst <= tol, worst)


def suite_logconcavity(seed: int = 0, draws: int = 25, tol: float = 1e-10, **_) -> SuiteResult:
    rng = np.random.default_rng(seed)
    quad = sample_source("uniform-box", 1, 400, {"lo": [-1.0], "hi": [1.0]}, 0, "grid-1d")
    specs = [CostSpec(p=2.0, variant="linear_ell")] + [shifted_spec(p, quad.r_x, 1.0) for p in (2.0, 2.5, 3.0)]
    worst = -np.inf
    for spec in specs:
        for _ in range(draws):
            n = int(rng.integers(2, 8))
            mu = make_discrete(rng.uniform(-1, 1, (n, 1)), radius=1.0)
            eps = float(rng.choice([1.0, 0.5, 0.2]))
            beta = float(rng.choice([0.5, 1.0, 2.0]))
            psi0, psi1 = rng.normal(scale=0.5, size=(2, n))
            worst = max(worst, midpoint_deficit(quad, mu, spec, eps, beta, psi0, psi1, float(rng.uniform())))
    return SuiteResult("logconcavity", worst <= tol, worst)


def suite_curvature(seed: int = 0, trials: int = 100_000, gamma_scale: float = 1.0, **_) -> SuiteResult:
    worst = -np.inf
    rng = np.random.default_rng(seed)
    for p in (1.2, 1.5, 1.8):
        cert = curvature_gamma(p, trials, seed)
        gamma = gamma_scale * gamma_analytic(p)
        worst = max(worst, cert.gamma_empirical - gamma)
        x0 = rng.normal(size=(10_000, 2)) * rng.exponential(size=(10_000, 1))
        x1 = rng.normal(size=(10_000, 2))
        t = rng.uniform(size=10_000)
        worst = max(worst, -float(np.min(semiconcavity_check(p, gamma, x0, x1, t))) - 1e-12)
    return SuiteResult("curvature", worst <= 1e-9, worst, f"(gamma scale {gamma_scale:g})")


def random_density_pair(rng: np.random.Generator, x: np.ndarray):
    a = rng.uniform(-2, 2, 3)
    b = rng.uniform(-2, 2, 3)
    h0 = np.exp(a[0] * x + a[1] * np.sin(3 * x + a[2]))
    h1 = np.exp(b[0] * x + b[1] * np.cos(2 * x + b[2]))
    rho = np.exp(-rng.uniform(0, 3) * (x - 0.5) ** 2)
    return h0, h1, rho


def suite_displacement(seed: int = 0, pairs: int = 20, grid: int = 2000, tol: float = 1e-6, **_) -> SuiteResult:
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, grid)
    worst = -np.inf
    for k in range(pairs):
        h0, h1, rho = random_density_pair(rng, x)
        p = 1.5 if k % 2 else 2.0
        worst = max(worst, displacement_bound_1d(h0, h1, x, rho, p, float(rng.uniform(0.05, 0.95))))
    return SuiteResult("displacement", worst <= tol, worst)


def random_convex_pl(rng: np.random.Generator, x: np.ndarray, knots: int = 8) -> np.ndarray:
    """Piecewise-linear convex function: max of affine pieces."""
    slopes = np.sort(rng.uniform(-3, 3, knots))
    offsets = rng.uniform(-1, 1, knots)
    return np.max(slopes[None, :] * x[:, None] + offsets[None, :], axis=1)


def suite_reverse_poincare(seed: int = 0, pairs: int = 100, grid: int = 2000, tol: float = 1e-6, **_) -> SuiteResult:
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, grid)
    worst = np.inf
    for _ in range(pairs):
        worst = min(worst, reverse_poincare_1d(random_convex_pl(rng, x), random_convex_pl(rng, x), x))
    return SuiteResult("reverse-poincare", worst >= -tol, -worst)


def suite_gn_interp(seed: int = 0, r: float = 1.5, grid: int = 1000, **_) -> SuiteResult:
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, grid)
    C = gn_calibrate([smoothed_random_walk(rng, x) for _ in range(10)], x, r)
    worst = min(gn_interp_check_1d(smoothed_random_walk(rng, x), x, r, C) for _ in range(10))
    return SuiteResult("gn-interp", worst >= 0, max(-worst, 0.0), f"(frozen C = {C:.4g})")


SUITES: Dict[str, Callable[..., SuiteResult]] = {
    "logconcavity": suite_logconcavity,
    "curvature": suite_curvature,
    "hessians": suite_hessians,
    "displacement": suite_displacement,
    "reverse-poincare": suite_reverse_poincare,
    "gn-interp": suite_gn_interp,
}


def run_suites(names: Optional[List[str]] = None, seed: int = 0, gamma_scale: float = 1.0,
               trials: int = 100_000) -> List[SuiteResult]:
    names = list(SUITES) if not names else names
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise ConfigError(f"unknown suite(s): {', '.join(unknown)}")
    return [SUITES[n](seed=seed, gamma_scale=gamma_scale, trials=trials) for n in names]
