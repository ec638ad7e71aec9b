"""Power costs ``|x - y|^p`` and their variants.

Four variants share one descriptor, :class:`CostSpec`:

* ``power``       scale * |x - y|^p
* ``linear_ell``  -<x, y>
* ``shifted``     scale * |x - y|^p - (gamma / 2) |x|^2
* ``boundary``    scale * min(|x - y|^p, d(x, O^c)^p + d(y, O^c)^p), O an axis-aligned box

``scale`` is either ``"one_over_p"`` (the default, so that the transport cost is
W_p^p / p) or ``"unit"``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ConfigError, DimensionError, NotApplicable

SCALES = ("one_over_p", "unit")
VARIANTS = ("power", "linear_ell", "shifted", "boundary")


@dataclass(frozen=True)
class CostSpec:
    p: float = 2.0
    scale: str = "one_over_p"
    variant: str = "power"
    gamma: Optional[float] = None
    omega_lo: Optional[tuple] = None
    omega_hi: Optional[tuple] = None

    def __post_init__(self):
        if not self.p > 1:
            raise ConfigError(f"cost exponent must be > 1, got {self.p}")
        if self.scale not in SCALES:
            raise ConfigError(f"unknown scale {self.scale!r}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown cost variant {self.variant!r}")
        if self.variant == "shifted" and self.gamma is None:
            raise ConfigError("shifted cost needs gamma")
        if self.variant == "boundary":
            if self.omega_lo is None or self.omega_hi is None:
                raise ConfigError("boundary cost needs omega_lo / omega_hi")
            lo, hi = np.asarray(self.omega_lo, float), np.asarray(self.omega_hi, float)
            if lo.shape != hi.shape or np.any(hi <= lo):
                raise ConfigError("boundary box must satisfy lo < hi componentwise")
            object.__setattr__(self, "omega_lo", tuple(lo.tolist()))
            object.__setattr__(self, "omega_hi", tuple(hi.tolist()))

    @property
    def q(self) -> float:
        return self.p / (self.p - 1.0)

    @property
    def factor(self) -> float:
        """Multiplier in front of |x - y|^p."""
        return 1.0 / self.p if self.scale == "one_over_p" else 1.0

    def to_dict(self) -> dict:
        out = {"p": self.p, "scale": self.scale, "variant": self.variant}
        if self.variant == "shifted":
            out["gamma"] = self.gamma
        if self.variant == "boundary":
            out["omega"] = {"lo": list(self.omega_lo), "hi": list(self.omega_hi)}
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "CostSpec":
        omega = data.get("omega") or {}
        lo, hi = omega.get("lo"), omega.get("hi")
        return cls(
            p=float(data.get("p", 2.0)),
            scale=data.get("scale", "one_over_p"),
            variant=data.get("variant", "power"),
            gamma=data.get("gamma"),
            omega_lo=None if lo is None else tuple(lo),
            omega_hi=None if hi is None else tuple(hi),
        )


def vector_power(v, alpha: float) -> np.ndarray:
    """``|v|^(alpha-1) v`` along the last axis; zero stays zero."""
    v = np.asarray(v, dtype=float)
    # rescale before squaring so tiny vectors do not underflow to norm 0
    big = np.max(np.abs(v), axis=-1, keepdims=True)
    safe_big = np.where(big > 0, big, 1.0)
    unit = v / safe_big
    unit_norm = np.where(big > 0, np.linalg.norm(unit, axis=-1, keepdims=True), 1.0)
    factor = np.where(big > 0, unit_norm ** (alpha - 1.0) * safe_big ** (alpha - 1.0), 0.0)
    return factor * v


def _as_points(a, name) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a[:, None]
    return a


def _box_distance_to_complement(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    gap = np.minimum(x - lo, hi - x).min(axis=-1)
    return np.maximum(gap, 0.0)


def cost_matrix(spec: CostSpec, X, Y) -> np.ndarray:
    """Cost ``c(x_j, y_i)`` for all pairs, shape ``(len(X), len(Y))``.

    One-dimensional inputs are read as lists of scalar points.
    """
    X, Y = _as_points(X, "X"), _as_points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if spec.variant == "linear_ell":
        return -(X @ Y.T)
    diff = X[:, None, :] - Y[None, :, :]
    dist_p = np.linalg.norm(diff, axis=-1) ** spec.p
    if spec.variant == "power":
        return spec.factor * dist_p
    if spec.variant == "shifted":
        sq = np.sum(X * X, axis=1)
        return spec.factor * dist_p - 0.5 * spec.gamma * sq[:, None]
    lo, hi = np.asarray(spec.omega_lo), np.asarray(spec.omega_hi)
    if lo.shape[0] != X.shape[1]:
        raise DimensionError("boundary box dimension does not match the points")
    dx = _box_distance_to_complement(X, lo, hi) ** spec.p
    dy = _box_distance_to_complement(Y, lo, hi) ** spec.p
    return spec.factor * np.minimum(dist_p, dx[:, None] + dy[None, :])


def cost_eval(spec: CostSpec, x, y) -> float:
    x, y = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(cost_matrix(spec, x[None, :], y[None, :])[0, 0])


def cost_grad_x_matrix(spec: CostSpec, X, Y) -> np.ndarray:
    """Gradient in x of ``c(x_j, y_i)``, shape ``(len(X), len(Y), d)``.

    For the power part this is ``scale * p * (x - y)^(p-1)``, taken as zero at
    ``x = y``. The boundary variant differentiates whichever branch is active.
    """
    X, Y = _as_points(X, "X"), _as_points(Y, "Y")
    if X.shape[1] != Y.shape[1]:
        raise DimensionError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if spec.variant == "linear_ell":
        return np.broadcast_to(-Y[None, :, :], (X.shape[0], Y.shape[0], Y.shape[1])).copy()
    diff = X[:, None, :] - Y[None, :, :]
    grad = spec.factor * spec.p * vector_power(diff, spec.p - 1.0)
    if spec.variant == "power":
        return grad
    if spec.variant == "shifted":
        return grad - spec.gamma * X[:, None, :]
    lo, hi = np.asarray(spec.omega_lo), np.asarray(spec.omega_hi)
    to_lo, to_hi = X - lo, hi - X
    gaps = np.concatenate([to_lo, to_hi], axis=1)
    k = np.argmin(gaps, axis=1)
    dist = np.maximum(gaps[np.arange(len(X)), k], 0.0)
    d = X.shape[1]
    ddist = np.zeros_like(X)
    ddist[np.arange(len(X)), k % d] = np.where(k < d, 1.0, -1.0)
    ddist[dist <= 0] = 0.0
    grad_b = spec.factor * spec.p * (dist ** (spec.p - 1.0))[:, None] * ddist
    dist_p = np.linalg.norm(diff, axis=-1) ** spec.p
    dx = dist ** spec.p
    dy = _box_distance_to_complement(Y, lo, hi) ** spec.p
    use_direct = dist_p <= dx[:, None] + dy[None, :]
    return np.where(use_direct[..., None], grad, grad_b[:, None, :])


def cost_grad_x(spec: CostSpec, x, y) -> np.ndarray:
    x, y = np.atleast_1d(np.asarray(x, float)), np.atleast_1d(np.asarray(y, float))
    if x.shape != y.shape:
        raise DimensionError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return cost_grad_x_matrix(spec, x[None, :], y[None, :])[0, 0]


def lipschitz_bound(spec: CostSpec, r_x: float, r_y: float) -> float:
    """Upper bound on the Lipschitz constant of any c-transform for the power cost."""
    return spec.factor * spec.p * (r_x + r_y) ** (spec.p - 1.0)


def shift_gamma(p: float, r_x: float, r_y: float) -> float:
    """Curvature that makes ``|x - y|^p / p - (gamma/2)|x|^2`` concave in x on the balls."""
    if p < 2:
        raise NotApplicable("no quadratic shift makes the p-cost concave when p < 2")
    return (p - 1.0) * (r_x + r_y) ** (p - 2.0)


def shifted_spec(p: float, r_x: float, r_y: float, scale: str = "one_over_p") -> CostSpec:
    gamma = shift_gamma(p, r_x, r_y)
    if scale == "unit":
        gamma *= p
    return CostSpec(p=p, scale=scale, variant="shifted", gamma=gamma)


def gamma_analytic(p: float) -> float:
    """Constant in ``p<a^(p-1) - b^(p-1), a - b> <= gamma |a - b|^p``.

    Sum of the two squared bounds ``|a-b|^(2p-2)`` and ``2 * 2^(3-2p) |a-b|^(2p-2)``
    followed by Cauchy-Schwarz gives ``p * sqrt(1 + 2^(4-2p))``.
    """
    if not 1 < p <= 2:
        raise NotApplicable(f"curvature constant is defined for 1 < p <= 2, got {p}")
    return p * np.sqrt(1.0 + 2.0 ** (4.0 - 2.0 * p))


@dataclass(frozen=True)
class CurvatureCertificate:
    p: float
    gamma_analytic: float
    gamma_empirical: float
    trials: int
    max_violation: float


def curvature_ratio(p: float, a, b, z) -> np.ndarray:
    """``p <(a-z)^(p-1) - (b-z)^(p-1), a-b> / |a-b|^p`` row-wise."""
    a, b, z = (np.atleast_2d(np.asarray(v, float)) for v in (a, b, z))
    num = p * np.sum((vector_power(a - z, p - 1) - vector_power(b - z, p - 1)) * (a - b), axis=-1)
    den = np.linalg.norm(a - b, axis=-1) ** p
    return num / den


def curvature_gamma(p: float, trials: int = 100_000, seed: int = 0) -> CurvatureCertificate:
    if not 1 < p < 2:
        raise NotApplicable(f"curvature certificate needs 1 < p < 2, got {p}")
    rng = np.random.default_rng(seed)
    g = gamma_analytic(p)
    best, worst_violation = -np.inf, -np.inf
    # cycle through dimensions 1..3; heavy-tailed radii for b to probe all scale ratios
    for d, count in zip((1, 2, 3), np.array_split(np.arange(trials), 3)):
        k = len(count)
        if k == 0:
            continue
        a = rng.normal(size=(k, d))
        b = rng.normal(size=(k, d)) * rng.exponential(size=(k, 1))
        z = rng.normal(size=(k, d)) * 0.5
        ratio = curvature_ratio(p, a, b, z)
        ok = np.isfinite(ratio)
        best = max(best, ratio[ok].max())
        dist_p = np.linalg.norm(a - b, axis=-1) ** p
        worst_violation = max(worst_violation, np.max((ratio[ok] - g) * dist_p[ok]))
    return CurvatureCertificate(p, g, float(best), int(trials), float(worst_violation))


def semiconcavity_check(p: float, gamma: float, x0, x1, t) -> np.ndarray:
    """Slack of ``|x_t|^p >= (1-t)|x0|^p + t|x1|^p - gamma t(1-t)|x0-x1|^p``.

    Accepts scalars or row-stacked vectors; returns a scalar for scalar input.
    """
    scalar = np.ndim(x0) == 0 and np.ndim(t) == 0
    x0, x1 = _as_points(x0, "x0"), _as_points(x1, "x1")
    t = np.atleast_1d(np.asarray(t, float))
    xt = (1 - t[:, None]) * x0 + t[:, None] * x1

    def norm_p(v):
        return np.linalg.norm(v, axis=-1) ** p

    slack = norm_p(xt) - (1 - t) * norm_p(x0) - t * norm_p(x1) + gamma * t * (1 - t) * norm_p(x0 - x1)
    return float(slack[0]) if scalar else slack


def curvature_condition_check(
    spec: CostSpec,
    p: float,
    gamma: float,
    samples: int = 10_000,
    seed: int = 0,
    lo=(0.0,),
    hi=(1.0,),
) -> float:
    """Largest sampled violation of the (p, gamma)-curvature condition of ``spec``.

    Points ``x0, x1, y`` are drawn uniformly from the box ``[lo, hi]``. A value
    ``<= 0`` (up to roundoff) means the condition held on every sample.
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    rng = np.random.default_rng(seed)
    d = lo.shape[0]
    x0 = rng.uniform(lo, hi, size=(samples, d))
    x1 = rng.uniform(lo, hi, size=(samples, d))
    y = rng.uniform(lo, hi, size=(samples, d))
    t = rng.uniform(size=samples)
    xt = (1 - t[:, None]) * x0 + t[:, None] * x1

    cx0, cx1, cxt = (_paired_cost(spec, x, y) for x in (x0, x1, xt))
    gap_p = np.linalg.norm(x0 - x1, axis=1) ** p
    violation = (1 - t) * cx0 + t * cx1 - gamma * t * (1 - t) * gap_p - cxt
    return float(np.max(violation))


def _paired_cost(spec: CostSpec, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """``c(X[k], Y[k])`` row by row without building the full matrix."""
    dist_p = np.linalg.norm(X - Y, axis=1) ** spec.p
    if spec.variant == "power":
        return spec.factor * dist_p
    if spec.variant == "shifted":
        return spec.factor * dist_p - 0.5 * spec.gamma * np.sum(X * X, axis=1)
    if spec.variant == "linear_ell":
        return -np.sum(X * Y, axis=1)
    lo, hi = np.asarray(spec.omega_lo), np.asarray(spec.omega_hi)
    dx = _box_distance_to_complement(X, lo, hi) ** spec.p
    dy = _box_distance_to_complement(Y, lo, hi) ** spec.p
    return spec.factor * np.minimum(dist_p, dx + dy)
