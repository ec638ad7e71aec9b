"""Semi-discrete entropic dual solver, epsilon continuation, map extraction and exact oracles."""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
from scipy.special import logsumexp

from .costs import CostSpec, cost_grad_x_matrix, cost_matrix, vector_power
from .entropic import hessian_from_plan, plan_matrix, scores, soft_min
from .errors import ConfigError, NonConvergence, NotApplicable, SupportError
from .measures import DiscreteMeasure, SourceQuadrature, _transport_1d, exact_transport, rel_entropy, sample_source

METHODS = ("newton", "gradient-ascent")
DENSE_LIMIT = 64


@dataclass(frozen=True)
class SolverOptions:
    """Dual solver settings. ``eps0 = None`` picks ``0.5 diam(Y)^p`` times the cost factor."""

    method: str = "newton"
    tol_marginal: float = 1e-10
    max_iters: int = 500
    line_search: str = "backtracking"
    eps0: Optional[float] = None
    factor: float = 0.5
    eps_min: Optional[float] = None
    levels: int = 8

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.line_search not in ("backtracking", "none"):
            raise ConfigError(f"unknown line search {self.line_search!r}")
        if not self.tol_marginal > 0:
            raise ConfigError("tol_marginal must be > 0")
        if not 0 < self.factor < 1:
            raise ConfigError("factor must lie in (0, 1)")
        if self.eps_min is not None and not self.eps_min > 0:
            raise ConfigError("eps_min must be > 0")
        if self.eps0 is not None and not self.eps0 > 0:
            raise ConfigError("eps0 must be > 0")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")

    def schedule(self, targets: DiscreteMeasure, spec: CostSpec) -> List[float]:
        eps0 = self.eps0 if self.eps0 is not None else default_eps0(targets, spec)
        eps_min = self.eps_min if self.eps_min is not None else eps0 * self.factor**self.levels
        if eps_min > eps0:
            raise ConfigError("eps_min exceeds eps0")
        out = [eps0]
        while out[-1] * self.factor >= eps_min * (1 - 1e-12):
            out.append(out[-1] * self.factor)
        return out

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, data: dict) -> "SolverOptions":
        return cls(**data)


def target_diameter(targets: DiscreteMeasure) -> float:
    Y = targets.points
    return float(np.max(np.linalg.norm(Y[:, None, :] - Y[None, :, :], axis=-1)))


def default_eps0(targets: DiscreteMeasure, spec: CostSpec) -> float:
    diam = target_diameter(targets)
    return 0.5 * (diam if diam > 0 else 1.0) ** spec.p * spec.factor


@dataclass(frozen=True)
class DualSolution:
    psi: np.ndarray
    phi: np.ndarray
    eps: float
    residual: float
    objective: float
    iters: int
    gauge: str = "zero-rho-mean-phi"
    history: tuple = field(default=(), compare=False)

    def to_dict(self) -> dict:
        return {
            "psi": self.psi.tolist(),
            "phi": self.phi.tolist(),
            "eps": self.eps,
            "residual": self.residual,
            "objective": self.objective,
            "iters": self.iters,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> "DualSolution":
        return cls(
            np.asarray(data["psi"], float), np.asarray(data["phi"], float), float(data["eps"]),
            float(data["residual"]), float(data["objective"]), int(data["iters"]),
        )


@dataclass(frozen=True)
class TransportMapEval:
    mode: str
    values: np.ndarray


class _Problem:
    """Cached cost matrix and weights for one (quadrature, target, cost) triple."""

    def __init__(self, quad: SourceQuadrature, mu: DiscreteMeasure, spec: CostSpec):
        if quad.dim != mu.dim:
            raise ConfigError("source and target dimensions differ")
        if np.any(mu.weights <= 0):
            raise SupportError("target weights must be strictly positive")
        self.quad, self.mu, self.spec = quad, mu, spec
        self.C = cost_matrix(spec, quad.nodes, mu.points)
        self.w = quad.weights
        self.log_sigma = np.log(mu.sigma)

    def phi(self, psi, eps):
        return soft_min(scores(psi, self.C), self.log_sigma, eps)

    def objective(self, psi, eps):
        """Concave dual ``<mu|psi> - K(psi)``."""
        return float(self.mu.weights @ psi + self.w @ self.phi(psi, eps))

    def plan(self, psi, eps):
        return plan_matrix(scores(psi, self.C), self.log_sigma, eps)


def _finish(prob: _Problem, psi, eps, iters, history=()) -> DualSolution:
    phi = prob.phi(psi, eps)
    lam = float(prob.w @ phi)
    psi, phi = psi + lam, phi - lam
    # divide out quadrature round-off in the total source mass
    grad = prob.w @ prob.plan(psi, eps)
    grad = grad / grad.sum()
    residual = float(np.abs(grad - prob.mu.weights).sum())
    obj = prob.objective(psi, eps) - eps * rel_entropy(prob.mu, prob.mu.sigma)
    return DualSolution(psi, phi, float(eps), residual, obj, iters, history=tuple(history))


def solve_dual(
    quad: SourceQuadrature,
    mu: DiscreteMeasure,
    spec: CostSpec,
    eps: float,
    opts: Optional[SolverOptions] = None,
    psi0: Optional[np.ndarray] = None,
) -> DualSolution:
    """Maximize ``<mu|psi> - K^{c,eps}(psi)`` and return gauge-fixed potentials.

    Newton steps use the dense Hessian with the constant direction projected
    out; gradient ascent is used for ``n > 64`` or on request. ``history``
    holds the dual objective after every accepted step.
    """
    opts = opts or SolverOptions()
    if not eps > 0:
        raise ConfigError("eps must be > 0")
    prob = _Problem(quad, mu, spec)
    n = mu.n
    psi = np.zeros(n) if psi0 is None else np.array(psi0, float)
    newton = opts.method == "newton" and n <= DENSE_LIMIT
    target = mu.weights
    obj = prob.objective(psi, eps)
    history = [obj]
    step_ga = eps
    residual = np.inf
    for it in range(opts.max_iters + 1):
        P = prob.plan(psi, eps)
        g = prob.w @ P
        r = target - g
        residual = float(np.abs(r).sum())
        if residual <= opts.tol_marginal:
            return _finish(prob, psi, eps, it, history)
        if it == opts.max_iters:
            break
        if newton:
            H = hessian_from_plan(P, prob.w, eps)
            H = H + np.full((n, n), 1.0 / (n * eps)) + 1e-10 / eps * np.eye(n)
            d = np.linalg.solve(H, r)
            d -= d.mean()
            t = 1.0
        else:
            d = r
            t = step_ga
        if opts.line_search == "none":
            psi = psi + t * d
            obj = prob.objective(psi, eps)
            history.append(obj)
            continue
        slope = float(r @ d)
        noise = 1e-13 * max(1.0, abs(obj))
        accepted = False
        for _ in range(60):
            cand = psi + t * d
            new_obj = prob.objective(cand, eps)
            if new_obj >= obj + 1e-4 * t * slope:
                accepted = True
                break
            if t * slope < noise and new_obj >= obj - noise:
                # gain below round-off: judge the step by the marginal residual instead
                cand_res = float(np.abs(target - prob.w @ prob.plan(cand, eps)).sum())
                if cand_res < residual:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        psi, obj = cand, new_obj
        history.append(new_obj)
        if not newton:
            step_ga = min(2 * t, 64 * eps)
    partial = _finish(prob, psi, eps, it, history)
    raise NonConvergence(
        f"dual solver stopped with marginal residual {residual:.3e} at eps={eps:g}", residual, partial
    )


def solve_eps_schedule(
    quad: SourceQuadrature,
    mu: DiscreteMeasure,
    spec: CostSpec,
    opts: Optional[SolverOptions] = None,
) -> List[DualSolution]:
    """Warm-started solves along the geometric schedule; see :func:`increments`."""
    opts = opts or SolverOptions()
    out: List[DualSolution] = []
    psi = None
    for eps in opts.schedule(mu, spec):
        try:
            sol = solve_dual(quad, mu, spec, eps, opts, psi0=psi)
        except NonConvergence as exc:
            exc.partial = out + ([exc.partial] if exc.partial is not None else [])
            raise
        out.append(sol)
        psi = sol.psi
    return out


def increments(solutions: List[DualSolution]) -> np.ndarray:
    """Sup-norm change of psi between consecutive levels."""
    return np.array([np.max(np.abs(b.psi - a.psi)) for a, b in zip(solutions, solutions[1:])])


def _soft_gradient(prob_C_grad: np.ndarray, P: np.ndarray) -> np.ndarray:
    return np.einsum("ji,jik->jk", P, prob_C_grad)


def invert_gradient(spec: CostSpec, x: np.ndarray, grad: np.ndarray) -> np.ndarray:
    """Solve ``grad_x c(x, y) = grad`` for ``y``."""
    if spec.variant == "linear_ell":
        return -grad
    if spec.variant == "shifted":
        grad = grad + spec.gamma * x
    elif spec.variant != "power":
        raise NotApplicable(f"no explicit gradient inverse for the {spec.variant} cost")
    return x - vector_power(grad / (spec.factor * spec.p), spec.q / spec.p)


def potential_gradients(solution: DualSolution, quad: SourceQuadrature, mu: DiscreteMeasure, spec: CostSpec) -> np.ndarray:
    """``grad phi_eps(x_j) = sum_i pi(y_i|x_j) grad_x c(x_j, y_i)``."""
    prob = _Problem(quad, mu, spec)
    P = prob.plan(solution.psi, solution.eps)
    return _soft_gradient(cost_grad_x_matrix(spec, quad.nodes, mu.points), P)


def extract_map(solution: DualSolution, quad: SourceQuadrature, mu: DiscreteMeasure, spec: CostSpec, mode: str = "hard-argmin") -> TransportMapEval:
    """Transport map at the quadrature nodes.

    ``hard-argmin`` assigns each node to its minimizing atom (lowest index on
    ties); ``entropic-soft`` inverts the cost gradient at the smoothed potential.
    """
    if mode == "hard-argmin":
        S = scores(solution.psi, cost_matrix(spec, quad.nodes, mu.points))
        return TransportMapEval(mode, mu.points[np.argmax(S, axis=1)].copy())
    if mode == "entropic-soft":
        if solution.eps == 0:
            raise ConfigError("soft map needs eps > 0")
        g = potential_gradients(solution, quad, mu, spec)
        return TransportMapEval(mode, invert_gradient(spec, quad.nodes, g))
    raise ConfigError(f"unknown map mode {mode!r}")


# ---------------------------------------------------------------------------
# exact (eps = 0) and primal oracles
# ---------------------------------------------------------------------------


def coarse_quadrature(quad: SourceQuadrature, atoms: int) -> SourceQuadrature:
    """Re-sample the source with ``atoms`` nodes using the same rule and seed."""
    if quad.kind == "grid-tensor":
        per_axis = int(round(atoms ** (1.0 / quad.dim)))
        return sample_source(quad.source, quad.dim, per_axis, quad.params, quad.seed, "grid-tensor")
    return sample_source(quad.source, quad.dim, atoms, quad.params, quad.seed, quad.kind)


def exact_dual_oracle(quad: SourceQuadrature, mu: DiscreteMeasure, spec: CostSpec, atoms: Optional[int] = None) -> DualSolution:
    """Unregularized dual potentials from the exact discrete transport problem.

    The source is used as given when it has at most 500 nodes, otherwise it
    is re-sampled with ``atoms`` nodes. ``phi`` is the hard c-transform of the
    returned ``psi`` and the zero rho-mean gauge is applied.
    """
    if atoms is not None and atoms != quad.m:
        quad = coarse_quadrature(quad, atoms)
    if quad.m > 500:
        raise ConfigError("exact oracle is limited to 500 source atoms")
    prob = _Problem(quad, mu, spec)
    res = None
    if quad.dim == 1 and spec.variant in ("power", "shifted", "linear_ell"):
        res = _transport_1d(quad.weights, quad.nodes[:, 0], mu.weights, mu.points[:, 0], prob.C)
    if res is None:
        res = exact_transport(quad.weights, mu.weights, prob.C)
    psi = np.asarray(res.dual_tgt, float)
    phi = prob.phi(psi, 0.0)
    lam = float(prob.w @ phi)
    psi, phi = psi + lam, phi - lam
    dual_value = float(prob.w @ phi + mu.weights @ psi)
    return DualSolution(psi, phi, 0.0, abs(res.value - dual_value), res.value, 0)


def primal_entropic_value(w: np.ndarray, mu_w: np.ndarray, C: np.ndarray, eps: float, tol: float = 1e-14, max_iters: int = 200_000) -> float:
    """Value of ``min sum pi C + eps KL(pi | w x mu)`` over couplings, by iterative proportional fitting.

    The plan is built directly in log space and rescaled alternately to each
    marginal; the value is then evaluated from the plan itself.
    """
    log_pi = -C / eps + np.log(w)[:, None] + np.log(mu_w)[None, :]
    for _ in range(max_iters):
        log_pi += np.log(w)[:, None] - logsumexp(log_pi, axis=1, keepdims=True)
        log_pi += np.log(mu_w)[None, :] - logsumexp(log_pi, axis=0, keepdims=True)
        err = np.abs(np.exp(logsumexp(log_pi, axis=1)) - w).sum()
        if err < tol:
            break
    pi = np.exp(log_pi)
    ref = np.log(w)[:, None] + np.log(mu_w)[None, :]
    return float(np.sum(pi * C) + eps * np.sum(pi * (log_pi - ref)))
