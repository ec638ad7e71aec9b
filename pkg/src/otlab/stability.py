"""Perturbation experiments for potentials and maps, exponent fits and report I/O."""
from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .costs import CostSpec, cost_matrix
from .dual import SolverOptions, exact_dual_oracle, extract_map, solve_eps_schedule, coarse_quadrature
from .entropic import soft_min
from .errors import ConfigError, FitError, OTLabError
from .measures import DiscreteMeasure, SourceQuadrature, make_discrete, w1_discrete

CSV_HEADER = "instance_id,p,eps_final,w1_gap,pot_l2_gap,var_gap,map_l2_gap,pairing,m_bound,bound_ok"
ORACLE_ATOMS = 200
FAMILY_KINDS = ("location", "mass", "jitter")


def theta_potentials(p: float) -> float:
    if not p > 1:
        raise ConfigError("p must be > 1")
    return 1.0 - 1.0 / p if p < 2 else 0.5


def theta_maps(p: float, margin: float = 0.05) -> float:
    """Map-stability exponent; for p < 2 the open-interval endpoint is shrunk by ``margin``.

    ``margin = 0`` returns the endpoint itself, which is only a supremum.
    """
    if not p > 1:
        raise ConfigError("p must be > 1")
    if p >= 2:
        return 1.0 / (6.0 * (p - 1.0))
    if not 0 <= margin < 1:
        raise ConfigError("margin must lie in [0, 1)")
    return (1.0 - margin) * (p - 1.0) ** 2 / (p * (p + 1.0))


def osc_bound(spec: CostSpec, r_x: float, r_y: float) -> float:
    """``2 R_X (R_X + R_Y)^{p-1}`` in the units of ``spec``."""
    return spec.factor * spec.p * 2.0 * r_x * (r_x + r_y) ** (spec.p - 1.0)


def theory_constant(spec: CostSpec, r_x: float, r_y: float) -> Optional[float]:
    """Constant in ``Var(dphi) <= C <dmu|dpsi>`` when explicit, else ``None``.

    For p = 2 this is ``2M`` with ``M = 2 R_X (R_X + R_Y)``; for p > 2 it is
    ``4 p R_X (R_X + R_Y)^{p-1}``. Both are stated for the 1/p-normalized
    cost and scale linearly with the cost factor.
    """
    p = spec.p
    unit = spec.factor * p
    if p == 2:
        return unit * 4.0 * r_x * (r_x + r_y)
    if p > 2:
        return unit * 4.0 * p * r_x * (r_x + r_y) ** (p - 1.0)
    return None


@dataclass
class StabilityRecord:
    instance_id: str
    p: float
    eps_final: float
    w1_gap: float
    pot_l2_gap: float
    var_gap: float
    map_l2_gap: float
    pairing: float
    m_bound: float
    bound_ok: bool = True
    flag: str = ""

    def csv_row(self) -> List[str]:
        vals = [self.p, self.eps_final, self.w1_gap, self.pot_l2_gap, self.var_gap,
                self.map_l2_gap, self.pairing, self.m_bound]
        return [self.instance_id] + [format_float(v) for v in vals] + ["true" if self.bound_ok else "false"]

    @property
    def completed(self) -> bool:
        return not self.flag


@dataclass
class StabilityReport:
    kind: str
    p: float
    records: List[StabilityRecord]
    theta_theory: float
    theta_fit: float = float("nan")
    theta_stderr: float = float("nan")
    constant_fit: float = float("nan")
    constant_envelope: float = float("nan")
    bound_violations: int = 0
    theory_constant: Optional[float] = None
    meta: Dict[str, object] = field(default_factory=dict)

    @property
    def completed_fraction(self) -> float:
        return sum(r.completed for r in self.records) / max(len(self.records), 1)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_HEADER + "\n")
        w = csv.writer(buf, lineterminator="\n")
        for rec in sorted(self.records, key=lambda r: r.instance_id):
            w.writerow(rec.csv_row())
        return buf.getvalue()

    def to_dict(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if k != "records"}
        out["records"] = [asdict(r) for r in sorted(self.records, key=lambda r: r.instance_id)]
        return _jsonable(out)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)


def format_float(x: float) -> str:
    """17 significant digits, locale independent."""
    return format(float(x), ".17g")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


# ---------------------------------------------------------------------------
# perturbation families
# ---------------------------------------------------------------------------


def perturbation_family(
    base: DiscreteMeasure,
    kind: str = "location",
    levels: int = 6,
    delta: float = 0.1,
    seed: int = 0,
    lo: Optional[Sequence[float]] = None,
    hi: Optional[Sequence[float]] = None,
) -> List[Tuple[str, DiscreteMeasure, DiscreteMeasure]]:
    """Pairs ``(base, perturbed)`` with perturbation size ``delta 2^-k``, ``k < levels``.

    ``location`` moves atom 0, ``mass`` transfers weight from atom 0 to atom 1
    (as a fraction of atom 0's weight), ``jitter`` moves every atom along a
    fixed seeded direction. Moved atoms are clipped to the box ``[lo, hi]``
    when given.
    """
    if kind not in FAMILY_KINDS:
        raise ConfigError(f"unknown perturbation family {kind!r}")
    rng = np.random.Generator(np.random.Philox(seed))
    d = base.dim
    direction = rng.normal(size=d)
    direction /= np.linalg.norm(direction)
    jitter = rng.uniform(-1.0, 1.0, size=(base.n, d))
    out = []
    for k in range(levels):
        step = delta * 2.0**-k
        pts, w = base.points.copy(), base.weights.copy()
        if kind == "location":
            pts[0] = pts[0] + step * direction
        elif kind == "mass":
            if base.n < 2:
                raise ConfigError("mass transfer needs at least two atoms")
            moved = step * w[0]
            w[0] -= moved
            w[1] += moved
        else:
            pts = pts + step * jitter
        if lo is not None and hi is not None:
            pts = np.clip(pts, lo, hi)
        radius = max(base.radius, float(np.max(np.linalg.norm(pts, axis=1))))
        out.append((f"{kind}-{k:02d}", base, make_discrete(pts, w, base.sigma, radius=radius)))
    return out


def default_suite(base: DiscreteMeasure, levels: int = 6, delta: float = 0.1, seed: int = 0, lo=None, hi=None):
    return [rec for kind in FAMILY_KINDS for rec in perturbation_family(base, kind, levels, delta, seed, lo, hi)]


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------


@dataclass
class _Solved:
    quad: SourceQuadrature
    psi: np.ndarray
    phi: np.ndarray
    eps: float
    tmap: np.ndarray


class _Cache:
    def __init__(self, quad: SourceQuadrature, spec: CostSpec, opts: SolverOptions, oracle: bool):
        self.quad, self.spec, self.opts, self.oracle = quad, spec, opts, oracle
        if oracle and quad.m > ORACLE_ATOMS:
            self.quad = coarse_quadrature(quad, ORACLE_ATOMS)
        self.store: Dict[bytes, _Solved] = {}

    def solve(self, mu: DiscreteMeasure) -> _Solved:
        key = mu.points.tobytes() + mu.weights.tobytes()
        if key not in self.store:
            if self.oracle:
                sol = exact_dual_oracle(self.quad, mu, self.spec)
            else:
                sol = solve_eps_schedule(self.quad, mu, self.spec, self.opts)[-1]
            tmap = extract_map(sol, self.quad, mu, self.spec, "hard-argmin").values
            self.store[key] = _Solved(self.quad, sol.psi, sol.phi, sol.eps, tmap)
        return self.store[key]


def extend_psi(phi: np.ndarray, quad: SourceQuadrature, spec: CostSpec, points: np.ndarray) -> np.ndarray:
    """``psi(y) = min_j c(x_j, y) - phi_j``: the c-transform of ``phi`` at arbitrary targets."""
    C = cost_matrix(spec, quad.nodes, points)
    return soft_min((phi[:, None] - C).T, np.zeros(len(phi)), 0.0)


def measure_record(
    instance_id: str,
    mu0: DiscreteMeasure,
    mu1: DiscreteMeasure,
    cache: _Cache,
) -> StabilityRecord:
    spec = cache.spec
    s0, s1 = cache.solve(mu0), cache.solve(mu1)
    quad = cache.quad
    w = quad.weights
    diff = s0.phi - s1.phi
    mean = float(w @ diff)
    pot_l2 = float(np.sqrt(w @ diff**2))
    var = float(w @ (diff - mean) ** 2)
    map_l2 = float(np.sqrt(w @ np.sum((s0.tmap - s1.tmap) ** 2, axis=1)))
    union = np.vstack([mu0.points, mu1.points])
    dpsi = extend_psi(s0.phi, quad, spec, union) - extend_psi(s1.phi, quad, spec, union)
    dmu = np.concatenate([mu0.weights, -mu1.weights])
    pairing = float(dmu @ dpsi)
    r_y = max(mu0.radius, mu1.radius)
    return StabilityRecord(
        instance_id, spec.p, s0.eps, w1_discrete(mu0, mu1), pot_l2, var, map_l2, pairing,
        osc_bound(spec, quad.r_x, r_y),
    )


def _failed_record(instance_id: str, spec: CostSpec, exc: Exception) -> StabilityRecord:
    nan = float("nan")
    return StabilityRecord(instance_id, spec.p, nan, nan, nan, nan, nan, nan, nan, False, f"{type(exc).__name__}: {exc}")


def exponent_fit(records, x_field: str, y_field: str):
    """Least squares of ``log y`` on ``log x``: returns ``(theta, stderr, C_fit)``."""
    xs = np.array([getattr(r, x_field) if not isinstance(r, dict) else r[x_field] for r in records], float)
    ys = np.array([getattr(r, y_field) if not isinstance(r, dict) else r[y_field] for r in records], float)
    keep = np.isfinite(xs) & np.isfinite(ys) & (xs > 0) & (ys > 0)
    xs, ys = xs[keep], ys[keep]
    if len(xs) < 4:
        raise FitError(f"need at least 4 positive records, got {len(xs)}")
    lx, ly = np.log(xs), np.log(ys)
    A = np.stack([lx, np.ones_like(lx)], axis=1)
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = len(xs) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(A.T @ A)
    return float(coef[0]), float(np.sqrt(max(cov[0, 0], 0.0))), float(np.exp(coef[1]))


def _envelope(records, x_field, y_field, theta) -> float:
    ratios = [getattr(r, y_field) / getattr(r, x_field) ** theta for r in records
              if r.completed and getattr(r, x_field) > 0]
    return float(max(ratios)) if ratios else float("nan")


def _run(kind, quad, family, spec, opts, oracle, rel_tol=1e-6, abs_tol=1e-12) -> StabilityReport:
    if len(family) == 0:
        raise ConfigError("empty perturbation family")
    cache = _Cache(quad, spec, opts or SolverOptions(), oracle)
    records = []
    for instance_id, mu0, mu1 in family:
        try:
            records.append(measure_record(instance_id, mu0, mu1, cache))
        except OTLabError as exc:
            records.append(_failed_record(instance_id, spec, exc))
    done = [r for r in records if r.completed]
    r_y = max((max(m0.radius, m1.radius) for _, m0, m1 in family), default=0.0)
    report = StabilityReport(kind, spec.p, records, float("nan"))
    report.meta = {"oracle": oracle, "source_atoms": cache.quad.m, "scale": spec.scale, "r_x": cache.quad.r_x, "r_y": r_y}
    if kind == "pot":
        report.theta_theory = theta_potentials(spec.p)
        report.theory_constant = theory_constant(spec, cache.quad.r_x, r_y)
        y_field = "pot_l2_gap"
        if report.theory_constant is not None:
            for r in done:
                r.bound_ok = r.var_gap <= report.theory_constant * r.pairing * (1 + rel_tol) + abs_tol
        else:
            # constant not explicit: fit the envelope for var <= C pairing^{2/q}
            expo = 2.0 / spec.q
            ratios = [r.var_gap / r.pairing**expo for r in done if r.pairing > 0]
            c_pair = max(ratios) if ratios else 0.0
            report.meta["pairing_exponent"] = expo
            report.meta["pairing_constant_fit"] = c_pair
            for r in done:
                r.bound_ok = bool(np.isfinite(c_pair)) and r.pairing >= -1e-10
    else:
        report.theta_theory = theta_maps(spec.p)
        y_field = "map_l2_gap"
        for r in done:
            r.bound_ok = bool(np.isfinite(r.map_l2_gap))
    report.bound_violations = sum(not r.bound_ok for r in done)
    report.constant_envelope = _envelope(done, "w1_gap", y_field, report.theta_theory)
    try:
        report.theta_fit, report.theta_stderr, report.constant_fit = exponent_fit(done, "w1_gap", y_field)
    except FitError as exc:
        report.meta["fit_error"] = str(exc)
    return report


def run_potential_stability(quad, family, spec: CostSpec, opts: Optional[SolverOptions] = None, oracle: bool = False) -> StabilityReport:
    """Potential-gap records with the theorem inequality checked per record.

    ``family`` is a list of ``(instance_id, mu0, mu1)``. Solver failures are
    recorded with a flag and the run continues.
    """
    return _run("pot", quad, family, spec, opts, oracle)


def run_map_stability(quad, family, spec: CostSpec, opts: Optional[SolverOptions] = None, oracle: bool = False) -> StabilityReport:
    return _run("map", quad, family, spec, opts, oracle)


# ---------------------------------------------------------------------------
# Ambrosio-Gigli comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AGVerdict:
    map_gap: float
    lip: float
    bound: float
    holds: bool


def empirical_lipschitz(nodes: np.ndarray, values: np.ndarray) -> float:
    dx = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=-1)
    dv = np.linalg.norm(values[:, None, :] - values[None, :, :], axis=-1)
    mask = dx > 0
    return float(np.max(dv[mask] / dx[mask])) if mask.any() else 0.0


def ambrosio_gigli_check(quad: SourceQuadrature, mu: DiscreteMeasure, nu: DiscreteMeasure, spec: CostSpec,
                         opts: Optional[SolverOptions] = None, mode: str = "entropic-soft") -> AGVerdict:
    """``||T_mu - T_nu||_{L2} <= 2 Lip(T_mu) diam(X) W_1(mu, nu)^{1/2}`` with the empirical Lipschitz constant."""
    if spec.p != 2:
        raise ConfigError("the Ambrosio-Gigli bound is stated for p = 2")
    maps = []
    for m in (mu, nu):
        sol = solve_eps_schedule(quad, m, spec, opts)[-1]
        maps.append(extract_map(sol, quad, m, spec, mode).values)
    gap = float(np.sqrt(quad.weights @ np.sum((maps[0] - maps[1]) ** 2, axis=1)))
    lip = empirical_lipschitz(quad.nodes, maps[0])
    bound = 2.0 * lip * quad.diam * np.sqrt(w1_discrete(mu, nu))
    return AGVerdict(gap, lip, float(bound), bool(gap <= bound * (1 + 1e-9) + 1e-12))
