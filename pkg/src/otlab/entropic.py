"""Hard and entropic c-transforms, the Kantorovich functional and the partition functional.

Notation: ``psi`` lives on the n target atoms, ``phi`` on the m quadrature
nodes. Score matrices are ``S[j, i] = psi_i - c(x_j, y_i)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from .costs import CostSpec, cost_matrix
from .errors import ConfigError, DimensionError
from .measures import DiscreteMeasure, SourceQuadrature

GAUGES = ("raw", "zero-rho-mean-phi")


@dataclass(frozen=True)
class PotentialOnTargets:
    values: np.ndarray
    gauge: str = "raw"

    def __post_init__(self):
        v = np.asarray(self.values, float)
        if not np.all(np.isfinite(v)):
            raise ConfigError("potential has non-finite entries")
        if self.gauge not in GAUGES:
            raise ConfigError(f"unknown gauge {self.gauge!r}")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class ConditionalPlan:
    """Row-stochastic matrix ``matrix[j, i] = pi(y_i | x_j)``."""

    matrix: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        """Conditional mean of ``v`` for each node."""
        return self.matrix @ v


@dataclass(frozen=True)
class TiltedQuadrature:
    base: SourceQuadrature
    weights: np.ndarray
    beta: float
    log_normalizer: float

    @property
    def normalizer(self) -> float:
        return float(np.exp(self.log_normalizer))

    def as_measure(self) -> DiscreteMeasure:
        from .measures import make_discrete

        return make_discrete(self.base.nodes, self.weights, radius=self.base.r_x)


# ---------------------------------------------------------------------------
# matrix-level kernels shared with the solver
# ---------------------------------------------------------------------------


def scores(psi: np.ndarray, C: np.ndarray) -> np.ndarray:
    return np.asarray(psi, float)[None, :] - C


def soft_min(S: np.ndarray, log_sigma: np.ndarray, eps: float) -> np.ndarray:
    """Row-wise ``-eps log sum_i sigma_i exp(S_ji / eps)``; hard minimum when eps = 0."""
    if eps == 0:
        return -np.max(S, axis=1)
    return -eps * logsumexp(S / eps + log_sigma[None, :], axis=1)


def plan_matrix(S: np.ndarray, log_sigma: np.ndarray, eps: float) -> np.ndarray:
    if eps == 0:
        P = np.zeros_like(S)
        P[np.arange(len(S)), np.argmax(S, axis=1)] = 1.0
        return P
    return softmax(S / eps + log_sigma[None, :], axis=1)


def _check_eps(eps: float, allow_zero: bool = False) -> float:
    eps = float(eps)
    if eps < 0 or (eps == 0 and not allow_zero) or not np.isfinite(eps):
        raise ConfigError(f"eps must be {'>= 0' if allow_zero else '> 0'}, got {eps}")
    return eps


def _check_beta(beta: float) -> float:
    if not beta > 0:
        raise ConfigError(f"beta must be > 0, got {beta}")
    return float(beta)


def _log_sigma(targets: DiscreteMeasure, sigma=None) -> np.ndarray:
    s = targets.sigma if sigma is None else np.asarray(sigma, float)
    if len(s) != targets.n:
        raise DimensionError("sigma must have one entry per target atom")
    if np.any(s <= 0):
        raise ConfigError("sigma must be strictly positive")
    return np.log(s)


def _points(x, d: int):
    x = np.asarray(x, float)
    single = x.ndim <= 1 and (x.size == d)
    pts = x.reshape(1, d) if single else (x.reshape(-1, 1) if x.ndim == 1 else x)
    if pts.shape[1] != d:
        raise DimensionError(f"points have dimension {pts.shape[1]}, targets {d}")
    return pts, single


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def c_transform(psi, targets: DiscreteMeasure, spec: CostSpec, x):
    """``min_i c(x, y_i) - psi_i`` at a point or at each row of ``x``."""
    pts, single = _points(x, targets.dim)
    phi = soft_min(scores(psi, cost_matrix(spec, pts, targets.points)), np.zeros(targets.n), 0.0)
    return float(phi[0]) if single else phi


def c_eps_transform(psi, targets: DiscreteMeasure, sigma, spec: CostSpec, eps: float, x):
    """Entropic transform ``-eps log sum_i sigma_i exp((psi_i - c(x, y_i)) / eps)``."""
    eps = _check_eps(eps)
    pts, single = _points(x, targets.dim)
    S = scores(psi, cost_matrix(spec, pts, targets.points))
    phi = soft_min(S, _log_sigma(targets, sigma), eps)
    return float(phi[0]) if single else phi


def phi_on_nodes(psi, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float) -> np.ndarray:
    """Transform of ``psi`` at every quadrature node (hard when eps = 0)."""
    eps = _check_eps(eps, allow_zero=True)
    S = scores(psi, cost_matrix(spec, quad.nodes, targets.points))
    return soft_min(S, _log_sigma(targets), eps)


def conditional_plan(psi, targets: DiscreteMeasure, sigma, spec: CostSpec, eps: float, quad: SourceQuadrature) -> ConditionalPlan:
    eps = _check_eps(eps)
    S = scores(psi, cost_matrix(spec, quad.nodes, targets.points))
    return ConditionalPlan(plan_matrix(S, _log_sigma(targets, sigma), eps))


# ---------------------------------------------------------------------------
# Kantorovich functional
# ---------------------------------------------------------------------------


def kantorovich_K(psi, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float) -> float:
    """``-sum_j w_j psi^{c,eps}(x_j)``; ``eps = 0`` uses the hard transform."""
    return -float(quad.weights @ phi_on_nodes(psi, quad, targets, spec, eps))


def grad_K(psi, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float) -> np.ndarray:
    P = conditional_plan(psi, targets, None, spec, eps, quad).matrix
    return quad.weights @ P


def _weighted_var(P: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Per-row variance of ``v`` under the distributions in the rows of ``P``."""
    # variance is shift invariant; centering makes constant v give exactly 0
    v = v - v[0]
    mean = P @ v
    return np.einsum("ji,ji->j", P, (v[None, :] - mean[:, None]) ** 2)


def hess_K_quadform(psi, v, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float) -> float:
    """``(1/eps) sum_j w_j Var_{pi(.|x_j)}(v)``."""
    eps = _check_eps(eps)
    P = conditional_plan(psi, targets, None, spec, eps, quad).matrix
    return float(quad.weights @ _weighted_var(P, np.asarray(v, float))) / eps


def hess_K_dense(psi, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float) -> np.ndarray:
    """Dense Hessian of K; intended for n <= 64."""
    eps = _check_eps(eps)
    P = conditional_plan(psi, targets, None, spec, eps, quad).matrix
    return hessian_from_plan(P, quad.weights, eps)


def hessian_from_plan(P: np.ndarray, w: np.ndarray, eps: float) -> np.ndarray:
    g = w @ P
    return (np.diag(g) - (P * w[:, None]).T @ P) / eps


# ---------------------------------------------------------------------------
# partition functional
# ---------------------------------------------------------------------------


def log_partition_I(psi, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float, beta: float = 1.0) -> float:
    beta = _check_beta(beta)
    phi = phi_on_nodes(psi, quad, targets, spec, _check_eps(eps))
    return float(logsumexp(beta * phi, b=quad.weights))


def partition_I(psi, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float, beta: float = 1.0) -> float:
    """``sum_j w_j exp(beta psi^{c,eps}(x_j))``, evaluated in log space."""
    return float(np.exp(log_partition_I(psi, quad, targets, spec, eps, beta)))


def tilted_quadrature(psi, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float, beta: float = 1.0) -> TiltedQuadrature:
    beta = _check_beta(beta)
    phi = phi_on_nodes(psi, quad, targets, spec, _check_eps(eps))
    with np.errstate(divide="ignore"):
        log_w = beta * phi + np.log(quad.weights)
    log_I = float(logsumexp(log_w))
    return TiltedQuadrature(quad, np.exp(log_w - log_I), beta, log_I)


def grad_log_I(psi, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float, beta: float = 1.0) -> np.ndarray:
    """``-beta sum_j wt_j pi(.|x_j)`` with ``wt`` the tilted weights."""
    tq = tilted_quadrature(psi, quad, targets, spec, eps, beta)
    P = conditional_plan(psi, targets, None, spec, eps, quad).matrix
    return -beta * (tq.weights @ P)


def log_I_hess_quadform(psi, v, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float, beta: float = 1.0) -> float:
    """Second derivative of ``log I_beta`` at ``psi`` along ``v``."""
    v = np.asarray(v, float)
    tq = tilted_quadrature(psi, quad, targets, spec, eps, beta)
    P = conditional_plan(psi, targets, None, spec, eps, quad).matrix
    inner = float(tq.weights @ _weighted_var(P, v))
    _, between, _ = stats(P @ v, tq.weights)
    return -beta / eps * inner + beta**2 * between


# ---------------------------------------------------------------------------
# statistics and gauge
# ---------------------------------------------------------------------------


def stats(values, weights):
    """Weighted mean, variance and oscillation."""
    f = np.asarray(values, float)
    w = np.asarray(weights, float)
    mean = float(w @ f)
    var = float(w @ (f - mean) ** 2)
    return mean, var, float(f.max() - f.min())


def gauge_shift(phi: np.ndarray, weights: np.ndarray) -> float:
    """Constant ``lam`` such that ``psi + lam`` has zero rho-mean transform."""
    return float(np.asarray(weights) @ np.asarray(phi))


def apply_gauge(psi: np.ndarray, phi: np.ndarray, weights: np.ndarray):
    lam = gauge_shift(phi, weights)
    return np.asarray(psi) + lam, np.asarray(phi) - lam


def gauged_potential(psi, quad: SourceQuadrature, targets: DiscreteMeasure, spec: CostSpec, eps: float) -> PotentialOnTargets:
    phi = phi_on_nodes(psi, quad, targets, spec, eps)
    new_psi, _ = apply_gauge(np.asarray(psi, float), phi, quad.weights)
    return PotentialOnTargets(new_psi, "zero-rho-mean-phi")
