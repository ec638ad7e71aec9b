"""One-dimensional functional inequalities and scalar helpers used by the stability arguments."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_simpson, trapezoid
from scipy.interpolate import CubicSpline
from scipy.optimize import minimize_scalar

from .costs import gamma_analytic
from .errors import ConfigError, NumericsError


def _grid_values(f, x: np.ndarray) -> np.ndarray:
    return np.asarray(f(x) if callable(f) else f, float)


def _normalized_density(h, x, rho) -> np.ndarray:
    dens = _grid_values(h, x) * _grid_values(rho, x)
    return dens / trapezoid(dens, x)


def _cdf(dens: np.ndarray, x: np.ndarray) -> np.ndarray:
    F = cumulative_simpson(dens, x=x, initial=0.0)
    F = F / F[-1]
    if np.any(np.diff(F) <= 0):
        raise NumericsError("cumulative distribution is not strictly increasing")
    return F


def monotone_map_1d(h0, h1, x: np.ndarray, rho) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Monotone map between ``h0 rho`` and ``h1 rho`` by CDF inversion.

    Returns ``(T, T', rho0, rho1)`` on the grid, with ``T'`` from the
    derivative of a cubic spline of the inverse CDF.
    """
    x = np.asarray(x, float)
    rho0 = _normalized_density(h0, x, rho)
    rho1 = _normalized_density(h1, x, rho)
    F0, F1 = _cdf(rho0, x), _cdf(rho1, x)
    inv1 = CubicSpline(F1, x)
    T = np.clip(inv1(F0), x[0], x[-1])
    dT = inv1(F0, 1) * rho0
    return T, dT, rho0, rho1


def displacement_bound_1d(h0, h1, x, rho, p: float = 2.0, t: float = 0.5) -> float:
    """Largest value of ``rho_t(T_t(x)) - rho0(x)^{1-t} rho1(T(x))^t`` over the grid.

    ``rho_t`` is the push-forward of ``h0 rho`` by ``(1 - t) Id + t T``; the
    monotone map is optimal for every convex cost in 1D, so ``p`` only
    selects the cost being illustrated.
    """
    if not p > 1:
        raise ConfigError("p must be > 1")
    if not 0 < t < 1:
        raise ConfigError("t must lie in (0, 1)")
    x = np.asarray(x, float)
    T, dT, rho0, rho1 = monotone_map_1d(h0, h1, x, rho)
    if np.any(dT <= 0):
        raise NumericsError("computed transport map is not increasing")
    rho_t = rho0 / ((1 - t) + t * dT)
    rho1_at_T = CubicSpline(x, rho1)(T)
    return float(np.max(rho_t - rho0 ** (1 - t) * rho1_at_T**t))


def quantile_w2_squared(dens0: np.ndarray, dens1: np.ndarray, x: np.ndarray, levels: int = 20001) -> float:
    """``W_2^2`` between two grid densities through their quantile functions."""
    F0, F1 = _cdf(dens0, x), _cdf(dens1, x)
    s = np.linspace(0.0, 1.0, levels)
    q0 = CubicSpline(F0, x)(s)
    q1 = CubicSpline(F1, x)(s)
    return float(trapezoid((q0 - q1) ** 2, s))


def peyre_check_1d(h0, h1, x, rho) -> float:
    """``W_2(h0 rho, h1 rho)^2 min(h1) / ||h1 - h0||^2_{L2(rho)}``, with both ``h`` normalized."""
    x = np.asarray(x, float)
    r = _grid_values(rho, x)
    r = r / trapezoid(r, x)
    g0 = _grid_values(h0, x)
    g1 = _grid_values(h1, x)
    g0 = g0 / trapezoid(g0 * r, x)
    g1 = g1 / trapezoid(g1 * r, x)
    if np.min(g1) <= 0:
        raise ConfigError("h1 must be bounded away from zero")
    denom = trapezoid((g1 - g0) ** 2 * r, x)
    if denom == 0:
        return 0.0
    w2 = quantile_w2_squared(g0 * r, g1 * r, x)
    return float(w2 * np.min(g1) / denom)


def _lip(u: np.ndarray, x: np.ndarray) -> float:
    return float(np.max(np.abs(np.diff(u) / np.diff(x))))


def reverse_poincare_1d(u, v, x) -> float:
    """``8 (Lip u + Lip v)^{4/3} (int |u - v|^2)^{1/3} - int |u' - v'|^2`` on ``[x_0, x_N]``.

    Derivatives are the slopes of the piecewise-linear interpolants, so the
    left integral is exact for piecewise-linear data.
    """
    x = np.asarray(x, float)
    u = _grid_values(u, x)
    v = _grid_values(v, x)
    for name, f in (("u", u), ("v", v)):
        slopes = np.diff(f) / np.diff(x)
        if np.any(np.diff(slopes) < -1e-10 * max(1.0, np.max(np.abs(slopes)))):
            raise ConfigError(f"{name} is not convex on the grid")
    dx = np.diff(x)
    dd = np.diff(u - v) / dx
    lhs = float(np.sum(dd**2 * dx))
    l2 = float(trapezoid((u - v) ** 2, x))
    return 8.0 * (_lip(u, x) + _lip(v, x)) ** (4.0 / 3.0) * l2 ** (1.0 / 3.0) - lhs


def _cell_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    dx = np.diff(x)
    w[:-1] += dx / 2
    w[1:] += dx / 2
    return w


def frac_seminorm_1d(g, x, alpha: float) -> float:
    """Off-diagonal double sum for ``int int |g(x) - g(y)| / |x - y|^{1+alpha}``."""
    if not 0 < alpha < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    x = np.asarray(x, float)
    g = _grid_values(g, x)
    w = _cell_weights(x)
    total = 0.0
    for start in range(0, len(x), 512):
        sl = slice(start, start + 512)
        dist = np.abs(x[sl, None] - x[None, :])
        num = np.abs(g[sl, None] - g[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            kern = np.where(dist > 0, num / dist ** (1.0 + alpha), 0.0)
        total += float(w[sl] @ kern @ w)
    return total


@dataclass(frozen=True)
class GNNorms:
    l2: float
    w1inf: float
    wr1: float
    h1: float


def gn_norms(u, x, r: float) -> GNNorms:
    """Norms entering the three-term interpolation inequality, for ``r`` in (1, 2)."""
    if not 1 < r < 2:
        raise ConfigError("r must lie in (1, 2)")
    x = np.asarray(x, float)
    u = _grid_values(u, x)
    du = np.gradient(u, x, edge_order=2)
    l2 = float(np.sqrt(trapezoid(u**2, x)))
    h1 = l2 + float(np.sqrt(trapezoid(du**2, x)))
    w1inf = float(np.max(np.abs(u)) + np.max(np.abs(du)))
    w11 = float(trapezoid(np.abs(u), x) + trapezoid(np.abs(du), x))
    wr1 = w11 + frac_seminorm_1d(du, x, r - 1.0)
    return GNNorms(l2, w1inf, wr1, h1)


def gn_rhs(norms: GNNorms, r: float) -> float:
    a = 1.0 / (1.0 + r)
    return norms.l2 ** (1.0 - 2.0 * a) * norms.w1inf**a * norms.wr1**a


def gn_calibrate(family: Sequence[np.ndarray], x, r: float, safety: float = 2.0) -> float:
    """Interpolation constant frozen as ``safety`` times the largest observed ratio."""
    ratios = []
    for u in family:
        n = gn_norms(u, x, r)
        rhs = gn_rhs(n, r)
        if rhs > 0:
            ratios.append(n.h1 / rhs)
    if not ratios:
        raise ConfigError("calibration family is identically zero")
    return safety * max(ratios)


def gn_interp_check_1d(u, x, r: float, C: float) -> float:
    """``C rhs(u) - ||u||_{H^1}`` with a previously calibrated constant ``C``."""
    n = gn_norms(u, x, r)
    return C * gn_rhs(n, r) - n.h1


def smoothed_random_walk(rng: np.random.Generator, x: np.ndarray, width: int = 25) -> np.ndarray:
    steps = rng.normal(size=len(x) + 2 * width)
    walk = np.cumsum(steps) / np.sqrt(len(x))
    kernel = np.exp(-0.5 * np.linspace(-3, 3, 2 * width + 1) ** 2)
    kernel /= kernel.sum()
    sm = np.convolve(walk, kernel, mode="valid")[: len(x)]
    return sm - sm.mean()


# ---------------------------------------------------------------------------
# beta optimization and (p, lambda)-concavity
# ---------------------------------------------------------------------------


def h_beta(beta, alpha: float, alpha_p: float, C: float, p: float):
    beta = np.asarray(beta, float)
    return beta * np.exp(-alpha * beta) - C * np.exp(alpha_p * beta) * beta**p


def h_beta_sup(alpha: float, alpha_p: float, C: float, p: float, grid: Optional[np.ndarray] = None) -> Tuple[float, float]:
    """Maximize ``h(beta) = beta e^{-alpha beta} - C e^{alpha' beta} beta^p`` over ``beta > 0``.

    A log-spaced grid brackets the maximizer, which is then refined by golden
    section. Returns ``(0, 0)`` when ``h <= 0`` at every sampled point.
    """
    if min(alpha, alpha_p, C) < 0:
        raise ConfigError("alpha, alpha' and C must be nonnegative")
    if not 1 < p < 2:
        raise ConfigError("p must lie in (1, 2)")
    grid = np.logspace(-12, 6, 2001) if grid is None else np.asarray(grid, float)
    with np.errstate(over="ignore", invalid="ignore"):
        vals = np.nan_to_num(h_beta(grid, alpha, alpha_p, C, p), nan=-np.inf, neginf=-np.inf)
    k = int(np.argmax(vals))
    if vals[k] <= 0:
        return 0.0, 0.0
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, len(grid) - 1)]
    if hi <= lo:
        return float(grid[k]), float(vals[k])
    res = minimize_scalar(lambda b: -float(h_beta(b, alpha, alpha_p, C, p)), bracket=(lo, grid[k], hi), method="golden",
                          options={"xtol": 1e-12}) if 0 < k < len(grid) - 1 else None
    if res is None or not res.success or -res.fun < vals[k]:
        return float(grid[k]), float(vals[k])
    return float(res.x), float(-res.fun)


def beta_seed(dphi_l2: float, p: float, gamma: float, C_rho: float) -> float:
    """Scaling ``||dphi||^{(2-p)/(p-1)} / (gamma (2 C_rho)^p)^{1/(p-1)}`` that ignores the exponentials."""
    return dphi_l2 ** ((2 - p) / (p - 1)) / (gamma * (2 * C_rho) ** p) ** (1 / (p - 1))


def p_lambda_concavity_check(points, grads, p: float, lam: float, chunk: int = 512) -> float:
    """``max_{i,j} <g_i - g_j, x_i - x_j> - lam |x_i - x_j|^p`` over all node pairs."""
    X = np.asarray(points, float)
    G = np.asarray(grads, float)
    if X.ndim == 1:
        X, G = X[:, None], G[:, None]
    worst = -np.inf
    for start in range(0, len(X), chunk):
        dx = X[start:start + chunk, None, :] - X[None, :, :]
        dg = G[start:start + chunk, None, :] - G[None, :, :]
        dist = np.linalg.norm(dx, axis=-1)
        val = np.where(dist > 0, np.einsum("ijk,ijk->ij", dg, dx) - lam * dist**p, -np.inf)
        worst = max(worst, float(val.max()))
    return worst


def lemma_lambda(p: float) -> float:
    """``2 gamma(p) / p^2`` for the 1/p-normalized cost."""
    return 2.0 * gamma_analytic(p) / p**2
