import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from conftest import brute_force_assignment
from serwkit.exceptions import InputError, SolverError
from serwkit.mmspace import MmSpace
from serwkit.ot import Coupling, exact_ot, sinkhorn, squared_euclidean_cost, w2_squared


def lp_oracle(cost, mu, nu):
    """Transportation LP solved by HiGHS, independent of the simplex under test."""
    n, m = cost.shape
    a_eq = np.zeros((n + m, n * m))
    for i in range(n):
        a_eq[i, i * m:(i + 1) * m] = 1
    for j in range(m):
        a_eq[n + j, j::m] = 1
    res = linprog(cost.ravel(), A_eq=a_eq, b_eq=np.r_[mu, nu], bounds=(0, None), method="highs")
    return res.fun


def random_marginal(rng, n):
    w = rng.random(n) + 0.05
    return w / w.sum()


def test_identical_two_points():
    x = np.array([[0.0, 0.0], [1.0, 2.0]])
    sol = exact_ot(squared_euclidean_cost(x, x), [0.5, 0.5], [0.5, 0.5])
    assert sol.cost == 0.0
    np.testing.assert_array_equal(sol.plan, np.diag([0.5, 0.5]))
    assert sol.converged


@pytest.mark.parametrize("n", [1, 2, 3, 4, 5, 6])
def test_exact_matches_permutations(n, rng):
    for _ in range(10):
        c = rng.random((n, n))
        assert exact_ot(c).cost == pytest.approx(brute_force_assignment(c), abs=1e-12)


@pytest.mark.parametrize("shape", [(3, 7), (8, 5), (12, 12), (1, 4)])
def test_exact_matches_lp(shape, rng):
    for _ in range(5):
        c = rng.standard_normal(shape) ** 2
        mu, nu = random_marginal(rng, shape[0]), random_marginal(rng, shape[1])
        sol = exact_ot(c, mu, nu)
        assert sol.cost == pytest.approx(lp_oracle(c, mu, nu), abs=1e-9)
        assert sol.coupling.marginal_error() < 1e-12
        assert np.count_nonzero(sol.plan > 0) <= sum(shape) - 1
        assert abs(sol.duality_gap()) < 1e-9
        assert sol.cost == pytest.approx(np.sum(c * sol.plan), abs=1e-12)


def test_exact_below_feasible_plans(rng):
    n, m = 6, 5
    c = rng.random((n, m))
    mu, nu = random_marginal(rng, n), random_marginal(rng, m)
    best = exact_ot(c, mu, nu).cost
    vertices = [exact_ot(rng.random((n, m)), mu, nu).plan for _ in range(40)]
    for _ in range(1000):
        lam = rng.dirichlet(np.ones(4))
        picks = rng.integers(0, len(vertices), 3)
        plan = lam[0] * np.outer(mu, nu) + sum(l * vertices[k] for l, k in zip(lam[1:], picks))
        assert best <= np.sum(c * plan) + 1e-12


def test_degenerate_marginals_terminate():
    # equal marginals on a constant-structure cost produce many degenerate pivots
    n = 15
    c = np.add.outer(np.arange(n), np.arange(n)) % 4 + 0.0
    sol = exact_ot(c)
    assert sol.cost == pytest.approx(lp_oracle(c, np.full(n, 1 / n), np.full(n, 1 / n)), abs=1e-12)


def test_pivot_budget_exhausted_raises(rng):
    c = rng.random((10, 10))
    with pytest.raises(SolverError) as err:
        exact_ot(c, max_pivots=1)
    assert err.value.iterations == 1


def test_bland_rule_from_start_same_cost(rng):
    c = rng.random((9, 7))
    mu, nu = random_marginal(rng, 9), random_marginal(rng, 7)
    assert exact_ot(c, mu, nu, bland_after=0).cost == pytest.approx(exact_ot(c, mu, nu).cost,
                                                                    abs=1e-12)


def test_marginal_mismatch():
    with pytest.raises(InputError):
        exact_ot(np.zeros((2, 2)), [0.5, 0.5], [0.6, 0.5])
    with pytest.raises(InputError):
        exact_ot(np.zeros((2, 3)), [0.5, 0.5], [0.5, 0.5])
    with pytest.raises(InputError):
        exact_ot([[0.0, np.inf]], [1.0], [0.5, 0.5])


def test_scaling_homogeneity(rng):
    x, y = rng.standard_normal((6, 2)), rng.standard_normal((5, 2))
    base = exact_ot(squared_euclidean_cost(x, y)).cost
    assert exact_ot(squared_euclidean_cost(3 * x, 3 * y)).cost == pytest.approx(9 * base, rel=1e-12)


def test_sinkhorn_close_to_exact(rng):
    for _ in range(5):
        c = rng.random((10, 10))
        exact = exact_ot(c).cost
        sol = sinkhorn(c, epsilon=1e-3)
        assert abs(sol.cost - exact) / exact < 0.01
        # slow to converge at this epsilon; the flag must say so honestly
        assert sol.coupling.marginal_error() < (1e-9 if sol.converged else 1e-3)


def test_sinkhorn_uniform_cost_gives_product(rng):
    mu, nu = random_marginal(rng, 4), random_marginal(rng, 6)
    for eps in (1e-3, 0.1, 10.0):
        sol = sinkhorn(np.full((4, 6), 2.0), mu, nu, epsilon=eps)
        np.testing.assert_allclose(sol.plan, np.outer(mu, nu), atol=1e-12)
        assert sol.converged


def test_sinkhorn_identical_clouds_shrinks(rng):
    x = rng.standard_normal((8, 2))
    c = squared_euclidean_cost(x, x)
    costs = [sinkhorn(c, epsilon=e).cost for e in (1.0, 0.1, 0.01, 0.001)]
    assert all(a >= b - 1e-12 for a, b in zip(costs, costs[1:]))
    assert costs[-1] < 1e-6


def test_sinkhorn_plan_positive_and_reports_nonconvergence(rng):
    c = rng.random((12, 9))
    sol = sinkhorn(c, epsilon=1e-4, max_iter=3, eps_scaling=False)
    assert not sol.converged
    assert sol.iterations == 3
    smooth = sinkhorn(c, epsilon=0.05)
    assert smooth.converged
    assert np.all(smooth.plan > 0)
    assert smooth.coupling.marginal_error() < 1e-9
    with pytest.raises(InputError):
        sinkhorn(c, epsilon=0.0)


def test_w2_examples(rng):
    a = MmSpace(rng.standard_normal((7, 3)))
    assert w2_squared(a, a) == 0.0
    assert w2_squared(MmSpace([[0.0, 0.0]]), MmSpace([[3.0, 4.0]])) == pytest.approx(25.0)
    with pytest.raises(InputError):
        w2_squared(a, MmSpace(np.zeros((2, 2))))
    with pytest.raises(InputError):
        w2_squared(a, a, solver="simplex")


def test_w2_metric_axioms(rng):
    for _ in range(50):
        a, b, c = (MmSpace(rng.standard_normal((rng.integers(2, 7), 2)),) for _ in range(3))
        ab, ba = w2_squared(a, b), w2_squared(b, a)
        assert ab == pytest.approx(ba, abs=1e-9)
        d = lambda p, q: np.sqrt(w2_squared(p, q))  # noqa: E731
        assert d(a, c) <= d(a, b) + d(b, c) + 1e-7


def test_coupling_helpers():
    c = Coupling.product([0.25, 0.75], [0.5, 0.5])
    np.testing.assert_allclose(c.plan, [[0.125, 0.125], [0.375, 0.375]])
    assert c.marginal_error() == 0.0
    clipped = Coupling.from_plan(np.array([[0.5, -1e-17], [0.0, 0.5]]))
    assert clipped.plan.min() == 0.0


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1), st.floats(-5, 5))
def test_row_shift_changes_cost_by_constant(n, m, seed, shift):
    rng = np.random.default_rng(seed)
    c = rng.random((n, m))
    mu, nu = random_marginal(rng, n), random_marginal(rng, m)
    shifted = c + shift * np.arange(n)[:, None]
    lhs = exact_ot(shifted, mu, nu).cost
    assert lhs == pytest.approx(exact_ot(c, mu, nu).cost + shift * mu @ np.arange(n), abs=1e-9)


@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_exact_plan_feasible(n, m, seed):
    rng = np.random.default_rng(seed)
    c = rng.random((n, m))
    mu, nu = random_marginal(rng, n), random_marginal(rng, m)
    sol = exact_ot(c, mu, nu)
    assert sol.plan.min() >= 0
    assert sol.coupling.marginal_error() < 1e-9
    assert sol.cost >= 0
