import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otlab.costs import CostSpec, cost_eval, cost_matrix
from otlab.entropic import (
    apply_gauge,
    c_eps_transform,
    c_transform,
    conditional_plan,
    gauged_potential,
    grad_K,
    hess_K_dense,
    hess_K_quadform,
    kantorovich_K,
    log_I_hess_quadform,
    log_partition_I,
    partition_I,
    phi_on_nodes,
    stats,
    tilted_quadrature,
)
from otlab.errors import ConfigError
from otlab.measures import make_discrete, sample_source
from otlab.verify import derivative_errors, random_problem

EPS = [1.0, 0.1, 0.01]
seeds = st.integers(0, 100_000)


def instance(seed, d=1, n=5, m=200):
    rng = np.random.default_rng(seed)
    quad, mu = random_problem(rng, d, n, m)
    return rng, quad, mu


def test_c_transform_single_target():
    mu = make_discrete([[0.4, -0.2]])
    spec = CostSpec(p=1.5)
    x = np.array([0.1, 0.3])
    assert c_transform(np.zeros(1), mu, spec, x) == pytest.approx(cost_eval(spec, x, mu.points[0]))


def test_c_transform_two_targets():
    mu = make_discrete([0.0, 2.0])
    assert c_transform(np.zeros(2), mu, CostSpec(p=2.0), 0.9) == pytest.approx(0.405)


@given(seeds, st.floats(-3, 3))
def test_shift_covariance(seed, lam):
    rng, quad, mu = instance(seed)
    spec = CostSpec(p=2.0)
    psi = rng.normal(size=mu.n)
    x = quad.nodes[:7]
    np.testing.assert_allclose(c_transform(psi + lam, mu, spec, x), c_transform(psi, mu, spec, x) - lam, atol=1e-12)
    np.testing.assert_allclose(
        c_eps_transform(psi + lam, mu, None, spec, 0.1, x), c_eps_transform(psi, mu, None, spec, 0.1, x) - lam, atol=1e-12
    )


def test_c_eps_single_target_exact():
    mu = make_discrete([[0.5]], sigma=[1.0])
    spec = CostSpec(p=3.0)
    val = c_eps_transform(np.array([0.7]), mu, None, spec, 0.05, 0.1)
    assert val == cost_eval(spec, 0.1, 0.5) - 0.7


def test_c_eps_rejects_nonpositive_eps():
    mu = make_discrete([0.0, 1.0])
    with pytest.raises(ConfigError):
        c_eps_transform(np.zeros(2), mu, None, CostSpec(p=2.0), 0.0, 0.3)


@pytest.mark.parametrize("eps", EPS)
def test_sandwich_bound(eps):
    for seed in range(100):
        rng, quad, mu = instance(seed, d=1 + seed % 2, n=int(3 + seed % 5), m=20)
        spec = CostSpec(p=float([1.5, 2.0, 3.0][seed % 3]))
        psi = rng.normal(size=mu.n)
        hard = c_transform(psi, mu, spec, quad.nodes)
        soft = c_eps_transform(psi, mu, None, spec, eps, quad.nodes)
        assert np.all(soft >= hard - 1e-12)
        assert np.all(soft <= hard - eps * np.log(mu.sigma.min()) + 1e-12)


@given(seeds)
def test_transform_monotone(seed):
    rng, quad, mu = instance(seed)
    spec = CostSpec(p=1.5)
    psi = rng.normal(size=mu.n)
    bigger = psi + rng.uniform(0, 1, mu.n)
    assert np.all(c_eps_transform(psi, mu, None, spec, 0.1, quad.nodes) >= c_eps_transform(bigger, mu, None, spec, 0.1, quad.nodes) - 1e-12)


@given(seeds, st.sampled_from(EPS))
def test_plan_rows_sum_to_one(seed, eps):
    rng, quad, mu = instance(seed, d=2)
    P = conditional_plan(rng.normal(size=mu.n), mu, None, CostSpec(p=2.0), eps, quad).matrix
    np.testing.assert_allclose(P.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(P >= 0)


def test_plan_symmetry():
    mu = make_discrete([0.0, 1.0], sigma=[0.5, 0.5])
    quad = sample_source("uniform-box", 1, 1, {"lo": [0.0], "hi": [1.0]}, 0, "grid-1d")
    P = conditional_plan(np.zeros(2), mu, None, CostSpec(p=1.5), 0.3, quad).matrix
    np.testing.assert_allclose(P[0], [0.5, 0.5], atol=1e-15)


@pytest.mark.parametrize("eps", EPS)
def test_derivatives_match_finite_differences(eps):
    for seed in range(4):
        rng, quad, mu = instance(seed, d=1 + seed % 2, n=6)
        spec = CostSpec(p=float([1.5, 2.0, 3.0, 2.5][seed]))
        errs = derivative_errors(quad, mu, spec, eps, rng.normal(scale=0.2, size=mu.n), rng.normal(size=mu.n), beta=0.7)
        assert max(errs.values()) <= 1e-5, errs


def test_K_single_target():
    quad = sample_source("uniform-box", 2, 50, None, 0, "monte-carlo")
    mu = make_discrete([[0.3, 0.6]])
    spec = CostSpec(p=2.0)
    expected = -quad.weights @ cost_matrix(spec, quad.nodes, mu.points)[:, 0]
    assert kantorovich_K(np.zeros(1), quad, mu, spec, 0.1) == pytest.approx(expected, abs=1e-14)
    assert kantorovich_K(np.zeros(1), quad, mu, spec, 0.0) == pytest.approx(expected, abs=1e-14)
    assert grad_K(np.zeros(1), quad, mu, spec, 0.1).tolist() == [1.0]


@given(seeds, st.sampled_from([0.0] + EPS))
def test_K_convex(seed, eps):
    rng, quad, mu = instance(seed)
    spec = CostSpec(p=2.0)
    a, b = rng.normal(size=(2, mu.n))
    K = lambda s: kantorovich_K(s, quad, mu, spec, eps)
    assert K((a + b) / 2) <= 0.5 * K(a) + 0.5 * K(b) + 1e-12


@given(seeds, st.floats(-2, 2))
def test_K_gauge(seed, lam):
    rng, quad, mu = instance(seed)
    spec = CostSpec(p=1.5)
    psi = rng.normal(size=mu.n)
    assert kantorovich_K(psi + lam, quad, mu, spec, 0.1) == pytest.approx(kantorovich_K(psi, quad, mu, spec, 0.1) + lam, abs=1e-12)


@given(seeds, st.sampled_from(EPS))
def test_grad_K_sums_to_one(seed, eps):
    rng, quad, mu = instance(seed, d=2)
    assert grad_K(rng.normal(size=mu.n), quad, mu, CostSpec(p=3.0), eps).sum() == pytest.approx(1.0, abs=1e-12)


@given(seeds)
def test_hessian_quadform_properties(seed):
    rng, quad, mu = instance(seed)
    spec = CostSpec(p=2.0)
    psi = rng.normal(size=mu.n)
    assert hess_K_quadform(psi, np.full(mu.n, 3.0), quad, mu, spec, 0.1) == 0.0
    v = rng.normal(size=mu.n)
    q = hess_K_quadform(psi, v, quad, mu, spec, 0.1)
    assert q >= 0
    assert v @ hess_K_dense(psi, quad, mu, spec, 0.1) @ v == pytest.approx(q, rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("eps", [1.0, 0.1])
def test_hessian_second_difference(eps):
    rng, quad, mu = instance(3)
    spec = CostSpec(p=2.0)
    psi, v = rng.normal(scale=0.3, size=(2, mu.n))
    h = 1e-4
    K = lambda s: kantorovich_K(s, quad, mu, spec, eps)
    fd = (K(psi + h * v) - 2 * K(psi) + K(psi - h * v)) / h**2
    assert hess_K_quadform(psi, v, quad, mu, spec, eps) == pytest.approx(fd, rel=1e-4)


def test_partition_trivial_cases():
    quad = sample_source("uniform-box", 1, 30, None, 0, "grid-1d")
    mu = make_discrete([[0.0]])
    spec = CostSpec(p=2.0, variant="linear_ell")
    # linear cost with the target at the origin is identically zero
    assert partition_I(np.zeros(1), quad, mu, spec, 0.3, 1.0) == pytest.approx(1.0)
    a = 0.37
    assert partition_I(np.array([-a]), quad, mu, spec, 0.3, 1.0) == pytest.approx(np.exp(a))
    tq = tilted_quadrature(np.array([-a]), quad, mu, spec, 0.3, 2.0)
    np.testing.assert_allclose(tq.weights, quad.weights, atol=1e-15)


@given(seeds, st.floats(-2, 2), st.sampled_from([0.5, 1.0, 2.0]))
def test_partition_shift_rule(seed, lam, beta):
    rng, quad, mu = instance(seed)
    spec = CostSpec(p=1.5)
    psi = rng.normal(size=mu.n)
    assert log_partition_I(psi + lam, quad, mu, spec, 0.1, beta) == pytest.approx(
        log_partition_I(psi, quad, mu, spec, 0.1, beta) - beta * lam, abs=1e-12
    )


@given(seeds)
def test_tilted_weights(seed):
    rng, quad, mu = instance(seed, d=2)
    spec = CostSpec(p=2.0)
    psi = rng.normal(size=mu.n)
    assert tilted_quadrature(psi, quad, mu, spec, 0.1, 1.3).weights.sum() == pytest.approx(1.0, abs=1e-12)
    phi = phi_on_nodes(psi, quad, mu, spec, 0.1)
    osc = np.ptp(phi)
    for beta in (1e-2, 1e-3, 1e-4):
        tq = tilted_quadrature(psi, quad, mu, spec, 0.1, beta)
        assert np.max(np.abs(tq.weights / quad.weights - 1)) <= 2 * beta * osc


@given(seeds)
def test_log_I_hessian_constant_direction(seed):
    rng, quad, mu = instance(seed)
    assert log_I_hess_quadform(rng.normal(size=mu.n), np.ones(mu.n), quad, mu, CostSpec(p=2.0), 0.1, 1.0) == pytest.approx(0.0, abs=1e-13)


def test_log_I_second_difference():
    rng, quad, mu = instance(11)
    spec = CostSpec(p=2.0)
    psi, v = rng.normal(scale=0.3, size=(2, mu.n))
    h = 1e-4
    L = lambda s: log_partition_I(s, quad, mu, spec, 0.5, 1.5)
    fd = (L(psi + h * v) - 2 * L(psi) + L(psi - h * v)) / h**2
    assert log_I_hess_quadform(psi, v, quad, mu, spec, 0.5, 1.5) == pytest.approx(fd, rel=1e-4)


@pytest.mark.parametrize("d,eps_values", [(1, EPS), (2, [1.0, 0.1])])
def test_log_I_concave_for_linear_cost(d, eps_values):
    # a log-concave source needs a quadrature that resolves the plan at scale eps
    rng = np.random.default_rng(5)
    lo, hi = [-1.0] * d, [1.0] * d
    quad = sample_source("uniform-box", d, 400 if d == 1 else 30, {"lo": lo, "hi": hi}, 0, "grid-1d" if d == 1 else "grid-tensor")
    spec = CostSpec(p=2.0, variant="linear_ell")
    worst = -np.inf
    for _ in range(100):
        n = int(rng.integers(2, 8))
        mu = make_discrete(rng.uniform(-1, 1, (n, d)))
        q = log_I_hess_quadform(rng.normal(size=n), rng.normal(size=n), quad, mu, spec,
                                float(rng.choice(eps_values)), float(rng.choice([0.5, 1.0, 2.0])))
        worst = max(worst, q)
    assert worst <= 1e-10


def test_stats_examples():
    assert stats(np.full(4, 2.5), np.full(4, 0.25)) == (2.5, 0.0, 0.0)
    mean, var, osc = stats(np.array([0.0, 1.0]), np.array([0.5, 0.5]))
    assert (mean, var, osc) == (0.5, 0.25, 1.0)


@given(seeds)
def test_variance_change_of_measure(seed):
    rng = np.random.default_rng(seed)
    f = rng.normal(size=20)
    w, w_hat = rng.dirichlet(np.ones(20), size=2)
    assert stats(f, w_hat)[1] <= np.max(w_hat / w) * stats(f, w)[1] * (1 + 1e-12)


@given(seeds)
def test_gauge(seed):
    rng, quad, mu = instance(seed)
    spec = CostSpec(p=2.0)
    psi = rng.normal(size=mu.n)
    pot = gauged_potential(psi, quad, mu, spec, 0.1)
    assert pot.gauge == "zero-rho-mean-phi"
    assert quad.weights @ phi_on_nodes(pot.values, quad, mu, spec, 0.1) == pytest.approx(0.0, abs=1e-12)
    phi = phi_on_nodes(psi, quad, mu, spec, 0.1)
    psi2, phi2 = apply_gauge(psi, phi, quad.weights)
    np.testing.assert_allclose(psi2, pot.values, atol=1e-12)
