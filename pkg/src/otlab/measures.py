"""Source quadratures, discrete target measures and exact discrete transport."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import sparse, stats
from scipy.optimize import linprog

from .costs import CostSpec, cost_matrix
from .errors import (
    ConfigError,
    DimensionError,
    InvalidMeasure,
    PartitionError,
    SolverError,
    SupportError,
)

WEIGHT_TOL = 1e-12


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


def _points_2d(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise InvalidMeasure("points must be a list of d-dimensional vectors")
    return pts


@dataclass(frozen=True)
class DiscreteMeasure:
    """Atoms ``points`` with simplex ``weights`` and positive reference weights ``sigma``."""

    points: np.ndarray
    weights: np.ndarray
    sigma: np.ndarray
    radius: float

    def __post_init__(self):
        pts = _points_2d(self.points)
        w = np.asarray(self.weights, float)
        s = np.asarray(self.sigma, float)
        if len(pts) == 0:
            raise InvalidMeasure("empty point list")
        if not (len(pts) == len(w) == len(s)):
            raise InvalidMeasure("points, weights and sigma must have equal length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidMeasure("weights must be nonnegative and sum to 1")
        if np.any(s <= 0) or abs(s.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidMeasure("sigma must be strictly positive and sum to 1")
        if np.max(np.linalg.norm(pts, axis=1)) > self.radius * (1 + 1e-12) + 1e-12:
            raise InvalidMeasure("an atom lies outside the declared radius")
        object.__setattr__(self, "points", _frozen(pts))
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "sigma", _frozen(s))

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def with_weights(self, weights) -> "DiscreteMeasure":
        return make_discrete(self.points, weights, self.sigma, radius=self.radius)

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
            "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "DiscreteMeasure":
        return make_discrete(data["points"], data["weights"], data.get("sigma"), radius=data.get("radius"))


def make_discrete(points, weights=None, sigma=None, radius: Optional[float] = None) -> DiscreteMeasure:
    """Build a :class:`DiscreteMeasure`, renormalizing ``weights`` (and ``sigma``).

    ``sigma`` defaults to uniform and ``radius`` to the largest atom norm.
    """
    pts = _points_2d(points)
    if len(pts) == 0:
        raise InvalidMeasure("empty point list")
    w = np.ones(len(pts)) if weights is None else np.asarray(weights, float).reshape(-1)
    if len(w) != len(pts):
        raise InvalidMeasure("points and weights have different lengths")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise InvalidMeasure("weights must be finite and nonnegative")
    if w.sum() <= 0:
        raise InvalidMeasure("weights are all zero")
    s = np.full(len(pts), 1.0 / len(pts)) if sigma is None else np.asarray(sigma, float).reshape(-1)
    if len(s) != len(pts) or np.any(s <= 0):
        raise InvalidMeasure("sigma must be strictly positive, one entry per atom")
    if radius is None:
        radius = float(np.max(np.linalg.norm(pts, axis=1)))
    return DiscreteMeasure(pts, w / w.sum(), s / s.sum(), float(radius))


@dataclass(frozen=True)
class SourceQuadrature:
    """Quadrature representation of the source measure.

    ``kind`` is the rule (``grid-1d``, ``grid-tensor`` or ``monte-carlo``);
    ``source`` and ``params`` describe the sampled distribution.
    """

    nodes: np.ndarray
    weights: np.ndarray
    r_x: float
    diam: float
    kind: str
    seed: int = 0
    density_values: Optional[np.ndarray] = None
    source: str = "uniform-box"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        nodes = _points_2d(self.nodes)
        w = np.asarray(self.weights, float)
        if len(nodes) != len(w):
            raise InvalidMeasure("nodes and weights have different lengths")
        if np.any(w < 0) or abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InvalidMeasure("quadrature weights must be nonnegative and sum to 1")
        if np.max(np.linalg.norm(nodes, axis=1)) > self.r_x * (1 + 1e-12):
            raise InvalidMeasure("a node lies outside the ball of radius r_x")
        if self.diam > 2 * self.r_x * (1 + 1e-12):
            raise InvalidMeasure("diam must not exceed 2 r_x")
        object.__setattr__(self, "nodes", _frozen(nodes))
        object.__setattr__(self, "weights", _frozen(w))
        if self.density_values is not None:
            object.__setattr__(self, "density_values", _frozen(self.density_values))

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]

    def as_measure(self) -> DiscreteMeasure:
        return make_discrete(self.nodes, self.weights, radius=self.r_x)

    def reweighted(self, weights) -> "SourceQuadrature":
        w = np.asarray(weights, float)
        return SourceQuadrature(
            self.nodes, w / w.sum(), self.r_x, self.diam, self.kind, self.seed,
            self.density_values, self.source, dict(self.params),
        )

    def to_dict(self) -> dict:
        out = {
            "points": self.nodes.tolist(),
            "weights": self.weights.tolist(),
            "kind": self.kind,
            "seed": self.seed,
            "r_x": self.r_x,
            "diam": self.diam,
        }
        if self.density_values is not None:
            out["density"] = self.density_values.tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SourceQuadrature":
        dens = data.get("density")
        return cls(
            np.asarray(data["points"], float), np.asarray(data["weights"], float),
            float(data["r_x"]), float(data["diam"]), data["kind"], int(data.get("seed", 0)),
            None if dens is None else np.asarray(dens, float),
        )


SOURCE_KINDS = ("uniform-box", "uniform-ball", "truncated-gaussian")
QUADRATURE_KINDS = ("grid-1d", "grid-tensor", "monte-carlo")


def _box_params(params: dict, d: int, default_lo=0.0, default_hi=1.0):
    lo = np.asarray(params.get("lo", [default_lo] * d), float).reshape(-1)
    hi = np.asarray(params.get("hi", [default_hi] * d), float).reshape(-1)
    if lo.shape != (d,) or hi.shape != (d,) or np.any(hi <= lo):
        raise ConfigError("box bounds must be length-d with lo < hi")
    return lo, hi


def _density_fn(kind: str, d: int, params: dict) -> Callable[[np.ndarray], np.ndarray]:
    """Normalized density of the source distribution, evaluated row-wise."""
    if kind == "uniform-box":
        lo, hi = _box_params(params, d)
        vol = np.prod(hi - lo)
        return lambda x: np.where(np.all((x >= lo) & (x <= hi), axis=1), 1.0 / vol, 0.0)
    if kind == "uniform-ball":
        c = np.asarray(params.get("center", [0.0] * d), float)
        r = float(params.get("radius", 1.0))
        from scipy.special import gamma as gamma_fn

        vol = np.pi ** (d / 2) / gamma_fn(d / 2 + 1) * r**d
        return lambda x: np.where(np.linalg.norm(x - c, axis=1) <= r, 1.0 / vol, 0.0)
    lo, hi = _box_params(params, d)
    mean = np.asarray(params.get("mean", (lo + hi) / 2), float).reshape(-1) * np.ones(d)
    std = np.asarray(params.get("std", (hi - lo) / 4), float).reshape(-1) * np.ones(d)
    dists = [stats.truncnorm((lo[k] - mean[k]) / std[k], (hi[k] - mean[k]) / std[k], mean[k], std[k]) for k in range(d)]
    return lambda x: np.prod([dists[k].pdf(x[:, k]) for k in range(d)], axis=0)


def _support_geometry(kind: str, d: int, params: dict):
    if kind == "uniform-ball":
        c = np.asarray(params.get("center", [0.0] * d), float)
        r = float(params.get("radius", 1.0))
        return float(np.linalg.norm(c) + r), 2.0 * r
    lo, hi = _box_params(params, d)
    r_x = float(np.sqrt(np.sum(np.maximum(lo**2, hi**2))))
    return r_x, float(np.linalg.norm(hi - lo))


def _interval(kind: str, d: int, params: dict):
    if kind == "uniform-ball":
        c = np.asarray(params.get("center", [0.0] * d), float)
        r = float(params.get("radius", 1.0))
        return c - r, c + r
    return _box_params(params, d)


def sample_source(
    kind: str = "uniform-box",
    d: int = 1,
    m: int = 2048,
    params: Optional[dict] = None,
    seed: int = 0,
    quadrature: Optional[str] = None,
) -> SourceQuadrature:
    """Quadrature of a log-concave source distribution.

    ``kind`` selects the distribution (``uniform-box``, ``uniform-ball``,
    ``truncated-gaussian``); ``quadrature`` the rule, defaulting to
    Gauss-Legendre in 1D and seeded Monte Carlo otherwise. For ``grid-tensor``
    ``m`` is the number of nodes per axis.
    """
    params = dict(params or {})
    if kind not in SOURCE_KINDS:
        raise ConfigError(f"unsupported source kind {kind!r}")
    if m < 1:
        raise ConfigError("need at least one quadrature node")
    quadrature = quadrature or ("grid-1d" if d == 1 else "monte-carlo")
    if quadrature not in QUADRATURE_KINDS:
        raise ConfigError(f"unsupported quadrature {quadrature!r}")
    if quadrature == "grid-1d" and d != 1:
        raise ConfigError("grid-1d quadrature requires d = 1")
    density = _density_fn(kind, d, params)
    r_x, diam = _support_geometry(kind, d, params)

    if quadrature == "monte-carlo":
        rng = np.random.Generator(np.random.Philox(seed))
        nodes = _monte_carlo_nodes(kind, d, m, params, rng)
        weights = np.full(m, 1.0 / m)
    else:
        lo, hi = _interval(kind, d, params)
        t, gw = np.polynomial.legendre.leggauss(m)
        axes = [(lo[k] + hi[k]) / 2 + (hi[k] - lo[k]) / 2 * t for k in range(d)]
        axis_w = [gw * (hi[k] - lo[k]) / 2 for k in range(d)]
        nodes = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)
        base_w = np.prod(np.stack([g.ravel() for g in np.meshgrid(*axis_w, indexing="ij")], axis=1), axis=1)
        weights = base_w * density(nodes)
        keep = weights > 0
        nodes, weights = nodes[keep], weights[keep]
        weights = weights / weights.sum()
    return SourceQuadrature(
        nodes, weights, r_x, diam, quadrature, seed, density(nodes), kind, params,
    )


def _monte_carlo_nodes(kind, d, m, params, rng) -> np.ndarray:
    if kind == "uniform-box":
        lo, hi = _box_params(params, d)
        return rng.uniform(lo, hi, size=(m, d))
    if kind == "uniform-ball":
        c = np.asarray(params.get("center", [0.0] * d), float)
        r = float(params.get("radius", 1.0))
        g = rng.normal(size=(m, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return c + r * g * rng.uniform(size=(m, 1)) ** (1.0 / d)
    lo, hi = _box_params(params, d)
    mean = np.asarray(params.get("mean", (lo + hi) / 2), float).reshape(-1) * np.ones(d)
    std = np.asarray(params.get("std", (hi - lo) / 4), float).reshape(-1) * np.ones(d)
    cols = [
        stats.truncnorm.rvs((lo[k] - mean[k]) / std[k], (hi[k] - mean[k]) / std[k],
                            loc=mean[k], scale=std[k], size=m, random_state=rng)
        for k in range(d)
    ]
    return np.stack(cols, axis=1)


# ---------------------------------------------------------------------------
# exact discrete transport
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TransportResult:
    """Optimal coupling in sparse form with dual potentials.

    ``value_error_bound`` bounds the error of ``value`` coming from the solver
    (duality gap plus marginal residual times the largest cost).
    """

    value: float
    rows: np.ndarray
    cols: np.ndarray
    mass: np.ndarray
    dual_src: np.ndarray
    dual_tgt: np.ndarray
    value_error_bound: float = 0.0

    def dense_plan(self, m: int, n: int) -> np.ndarray:
        plan = np.zeros((m, n))
        np.add.at(plan, (self.rows, self.cols), self.mass)
        return plan


def _staircase(a: np.ndarray, b: np.ndarray):
    """North-west corner basis for sorted 1D marginals.

    Returns the ``len(a) + len(b) - 1`` tree edges with their masses
    (possibly zero on degenerate steps).
    """
    A, B = np.cumsum(a), np.cumsum(b)
    A[-1] = B[-1] = 1.0
    m, n = len(a), len(b)
    rows, cols, mass = [], [], []
    i = j = 0
    cur = 0.0
    while True:
        nxt = min(A[i], B[j])
        rows.append(i)
        cols.append(j)
        mass.append(max(nxt - cur, 0.0))
        cur = max(cur, nxt)
        if i == m - 1 and j == n - 1:
            break
        if (A[i] <= B[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    return np.array(rows), np.array(cols), np.array(mass)


def _tree_duals(rows, cols, C):
    m, n = C.shape
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    u[rows[0]] = 0.0
    for i, j in zip(rows, cols):
        if np.isnan(v[j]):
            v[j] = C[i, j] - u[i]
        else:
            u[i] = C[i, j] - v[j]
    return u, v


def _transport_1d(a, x, b, y, C) -> Optional[TransportResult]:
    """Monotone coupling; returns ``None`` if its duals are not feasible for ``C``."""
    sx, sy = np.argsort(x, kind="stable"), np.argsort(y, kind="stable")
    rows, cols, mass = _staircase(a[sx], b[sy])
    Cs = C[np.ix_(sx, sy)]
    u_s, v_s = _tree_duals(rows, cols, Cs)
    scale = max(1.0, float(np.max(np.abs(C))))
    if np.min(Cs - u_s[:, None] - v_s[None, :]) < -1e-11 * scale:
        return None
    u, v = np.empty_like(u_s), np.empty_like(v_s)
    u[sx], v[sy] = u_s, v_s
    value = float(np.sum(mass * Cs[rows, cols]))
    keep = mass > 0
    return TransportResult(value, sx[rows[keep]], sy[cols[keep]], mass[keep], u, v, 0.0)


def exact_transport(a, b, C) -> TransportResult:
    """Exact optimal transport between weight vectors ``a`` and ``b`` for cost ``C``.

    Solved as a linear program by the HiGHS dual simplex; equality-constraint
    marginals supply the dual potentials.
    """
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    C = np.asarray(C, float)
    m, n = C.shape
    b = b * (a.sum() / b.sum())
    ii = np.repeat(np.arange(m), n)
    jj = np.tile(np.arange(n), m)
    cols = np.arange(m * n)
    A_eq = sparse.vstack([
        sparse.csr_matrix((np.ones(m * n), (ii, cols)), shape=(m, m * n)),
        sparse.csr_matrix((np.ones(m * n), (jj, cols)), shape=(n, m * n)),
    ]).tocsr()
    res = linprog(
        C.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None),
        method="highs-ds",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10, "presolve": True},
    )
    if res.status != 0:
        raise SolverError(f"transport LP failed: {res.message}")
    x = np.maximum(res.x, 0.0)
    duals = res.eqlin.marginals
    u, v = duals[:m], duals[m:]
    plan = x.reshape(m, n)
    value = float(np.sum(plan * C))
    dual_value = float(a @ u + b @ v)
    residual = np.abs(plan.sum(1) - a).sum() + np.abs(plan.sum(0) - b).sum()
    bound = abs(value - dual_value) + residual * float(np.max(np.abs(C)))
    r, c = np.nonzero(plan > 0)
    return TransportResult(value, r, c, plan[r, c], u, v, bound)


def _monge_in_1d(spec: CostSpec) -> bool:
    return spec.variant in ("power", "shifted", "linear_ell")


def wp_discrete(mu: DiscreteMeasure, nu: DiscreteMeasure, spec: CostSpec) -> TransportResult:
    """Optimal transport for ``spec`` between two discrete measures.

    In one dimension the cost is submodular for every variant except
    ``boundary``, so the monotone coupling is used; otherwise (or if the
    monotone duals fail the feasibility check) the LP is solved.
    """
    if mu.dim != nu.dim:
        raise DimensionError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    C = cost_matrix(spec, mu.points, nu.points)
    if mu.dim == 1 and _monge_in_1d(spec):
        out = _transport_1d(mu.weights, mu.points[:, 0], nu.weights, nu.points[:, 0], C)
        if out is not None:
            return out
    return exact_transport(mu.weights, nu.weights, C)


def w1_discrete(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Exact W_1 with Euclidean ground cost."""
    if mu.dim != nu.dim:
        raise DimensionError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if mu.dim == 1:
        x = np.concatenate([mu.points[:, 0], nu.points[:, 0]])
        w = np.concatenate([mu.weights, -nu.weights])
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        cdf_gap = np.cumsum(w)[:-1]
        return float(np.sum(np.abs(cdf_gap) * np.diff(x)))
    C = np.linalg.norm(mu.points[:, None, :] - nu.points[None, :, :], axis=-1)
    return exact_transport(mu.weights, nu.weights, C).value


def wp_power(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float) -> float:
    """``W_p(mu, nu)^p`` for the unit-scale cost ``|x - y|^p``."""
    return wp_discrete(mu, nu, CostSpec(p=p, scale="unit")).value


def rel_entropy(mu, sigma) -> float:
    """``sum mu_i log(mu_i / sigma_i)`` with the convention 0 log 0 = 0."""
    w = mu.weights if isinstance(mu, DiscreteMeasure) else np.asarray(mu, float)
    s = np.asarray(sigma, float)
    if w.shape != s.shape:
        raise DimensionError("mu and sigma have different lengths")
    if np.any((w > 0) & (s <= 0)):
        raise SupportError("mu charges an atom where sigma vanishes")
    pos = w > 0
    return float(np.sum(w[pos] * np.log(w[pos] / s[pos])))


# ---------------------------------------------------------------------------
# target discretization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxPartition:
    """Cells ``[lo_k, hi_k]`` with one representative point each."""

    lo: np.ndarray
    hi: np.ndarray
    reps: np.ndarray

    @property
    def size(self) -> int:
        return len(self.lo)

    @property
    def max_cell_diameter(self) -> float:
        return float(np.max(np.linalg.norm(self.hi - self.lo, axis=1)))

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.hi.max(axis=0) - self.lo.min(axis=0)))

    def locate(self, points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
        """Index of the first cell containing each point, -1 if none does."""
        inside = np.all(
            (points[:, None, :] >= self.lo[None] - tol) & (points[:, None, :] <= self.hi[None] + tol), axis=2
        )
        idx = np.argmax(inside, axis=1)
        idx[~inside.any(axis=1)] = -1
        return idx


def uniform_partition(lo: Sequence[float], hi: Sequence[float], cells_per_axis: int) -> BoxPartition:
    lo, hi = np.asarray(lo, float).reshape(-1), np.asarray(hi, float).reshape(-1)
    edges = [np.linspace(lo[k], hi[k], cells_per_axis + 1) for k in range(len(lo))]
    grids_lo = np.meshgrid(*[e[:-1] for e in edges], indexing="ij")
    grids_hi = np.meshgrid(*[e[1:] for e in edges], indexing="ij")
    clo = np.stack([g.ravel() for g in grids_lo], axis=1)
    chi = np.stack([g.ravel() for g in grids_hi], axis=1)
    return BoxPartition(clo, chi, (clo + chi) / 2)


def discretize_target(
    mu,
    n: Optional[int] = None,
    partition: Optional[BoxPartition] = None,
    sigma=None,
) -> DiscreteMeasure:
    """Finite approximation with strictly positive weights on the cell representatives.

    Atom ``i`` receives ``(1 - 1/n) mu(Y_i) + 1/n^2``. ``mu`` is either a
    :class:`DiscreteMeasure` or a density callable on the partition's box
    (then ``partition`` is required).
    """
    if partition is None:
        if not isinstance(mu, DiscreteMeasure):
            raise PartitionError("a density target needs an explicit partition")
        if n is None or n < 1:
            raise ConfigError("n must be >= 1")
        per_axis = int(round(n ** (1.0 / mu.dim)))
        if per_axis**mu.dim != n:
            raise ConfigError(f"n = {n} is not a perfect power of the dimension {mu.dim}")
        lo, hi = mu.points.min(axis=0), mu.points.max(axis=0)
        hi = np.where(hi > lo, hi, lo + 1.0)
        partition = uniform_partition(lo, hi, per_axis)
    if n is not None and n != partition.size:
        raise ConfigError(f"n = {n} does not match the partition size {partition.size}")
    n = partition.size
    if isinstance(mu, DiscreteMeasure):
        cell = partition.locate(mu.points)
        if np.any(cell[mu.weights > 0] < 0):
            raise PartitionError("partition does not cover the support of mu")
        mass = np.bincount(cell[cell >= 0], weights=mu.weights[cell >= 0], minlength=n)
    else:
        mass = _cell_masses(mu, partition)
    weights = (1.0 - 1.0 / n) * mass / mass.sum() + 1.0 / n**2
    radius = float(np.max(np.linalg.norm(partition.reps, axis=1)))
    return make_discrete(partition.reps, weights, sigma, radius=radius)


def _cell_masses(density: Callable, partition: BoxPartition, order: int = 8) -> np.ndarray:
    t, gw = np.polynomial.legendre.leggauss(order)
    d = partition.lo.shape[1]
    ref = np.stack([g.ravel() for g in np.meshgrid(*([t] * d), indexing="ij")], axis=1)
    ref_w = np.prod(np.stack([g.ravel() for g in np.meshgrid(*([gw] * d), indexing="ij")], axis=1), axis=1)
    out = np.empty(partition.size)
    for k in range(partition.size):
        half = (partition.hi[k] - partition.lo[k]) / 2
        pts = partition.lo[k] + half * (ref + 1)
        out[k] = np.sum(ref_w * np.asarray(density(pts), float)) * np.prod(half)
    if np.any(out < 0):
        raise InvalidMeasure("target density is negative somewhere")
    return out


def discretization_bound(partition: BoxPartition) -> float:
    """``eps_n + diam(Y) / n`` for the given partition."""
    return partition.max_cell_diameter + partition.diameter / partition.size


# ---------------------------------------------------------------------------
# JSON
# ---------------------------------------------------------------------------


def dumps(obj) -> str:
    return json.dumps(obj.to_dict(), sort_keys=True)


def load_measure(text: str) -> DiscreteMeasure:
    return DiscreteMeasure.from_dict(json.loads(text))


def load_quadrature(text: str) -> SourceQuadrature:
    return SourceQuadrature.from_dict(json.loads(text))
