import math

import numpy as np
import pytest

from decarb.errors import DimensionMismatch, InfeasibleProblem
from decarb.optimizer import (PortfolioProblem, Status, Tolerances, kkt_residual, project_feasible,
                              solve)
from decarb.risk import normal_quantile

T95 = normal_quantile(0.95)


def simplex_grid(n=3, step=0.01):
    m = int(round(1 / step))
    pts = [(i, j, m - i - j) for i in range(m + 1) for j in range(m + 1 - i)]
    return np.array(pts, dtype=float) / m


def cap_boundary_points(carbon, cap, step=0.01):
    """Points of the 3-simplex on the plane carbon @ w == cap, one per grid value of w0.

    The lattice alone misses this segment, where capped optima live; its end
    points on the simplex edges are included.
    """
    pts = []
    c0, c1, c2 = carbon
    for w0 in np.arange(0.0, 1.0 + step / 2, step):
        rest, budget = 1.0 - w0, cap - c0 * w0
        if abs(c1 - c2) < 1e-15:
            continue
        w1 = (budget - c2 * rest) / (c1 - c2)
        w2 = rest - w1
        if w1 >= 0 and w2 >= 0:
            pts.append((w0, w1, w2))
    # corners where the plane crosses a simplex edge
    for i, j in ((0, 1), (0, 2), (1, 2)):
        if abs(carbon[i] - carbon[j]) < 1e-15:
            continue
        wi = (cap - carbon[j]) / (carbon[i] - carbon[j])
        if 0.0 <= wi <= 1.0:
            w = np.zeros(3)
            w[i], w[j] = wi, 1.0 - wi
            pts.append(tuple(w))
    return np.array(pts).reshape(-1, 3)


def grid_oracle(prob, step=0.01):
    grid = simplex_grid(step=step)
    if prob.has_cap:
        grid = grid[grid @ prob.carbon <= prob.cap]
        grid = np.vstack([grid, cap_boundary_points(prob.carbon, prob.cap, step)])
    return min(prob.objective(w) for w in grid)


def random_problem(seed, n=3, cap_frac=None, pins=()):
    """Daily-return-scale problem; ``cap_frac`` in (0,1) places the cap between min and mean carbon."""
    rng = np.random.default_rng(seed)
    mu = rng.normal(0.0004, 0.0006, n)
    A = rng.normal(0, 0.012, (n, n))
    sigma = A @ A.T + np.diag(rng.uniform(1e-5, 2e-4, n))
    carbon = cap = None
    if cap_frac is not None:
        carbon = rng.uniform(1.0, 100.0, n)
        cap = carbon.min() + cap_frac * (carbon.mean() - carbon.min())
    return PortfolioProblem(mu, sigma, T95, -1.0, frozenset(pins), carbon, cap)


def check_feasible(w, problem, tol=1e-8):
    assert abs(w.sum() - 1.0) <= tol
    assert w.min() >= -1e-10
    for i in problem.pinned:
        assert w[i] == 0.0
    if problem.has_cap:
        assert problem.carbon @ w <= problem.cap + tol


# ------------------------------------------------------------------ problem

def test_problem_validation():
    with pytest.raises(DimensionMismatch):
        PortfolioProblem(np.zeros(2), np.eye(3), 1.0)
    with pytest.raises(ValueError):
        PortfolioProblem(np.zeros(2), np.eye(2), 0.0)
    with pytest.raises(ValueError):
        PortfolioProblem(np.zeros(2), np.eye(2), 1.0, pinned=frozenset({0, 1}))
    with pytest.raises(InfeasibleProblem, match="carbon cap infeasible"):
        PortfolioProblem(np.zeros(2), np.eye(2), 1.0, carbon=np.array([10.0, 8.0]), cap=5.0)
    with pytest.raises(InfeasibleProblem):
        PortfolioProblem(np.zeros(3), np.eye(3), 1.0, pinned=frozenset({2}),
                         carbon=np.array([10.0, 8.0, 1.0]), cap=5.0)


# --------------------------------------------------------------- projection

def test_projection_examples():
    p = PortfolioProblem(np.zeros(3), np.eye(3), 1.0)
    w0 = np.array([0.2, 0.3, 0.5])
    np.testing.assert_array_equal(project_feasible(w0, p), w0)

    pinned = PortfolioProblem(np.zeros(2), np.eye(2), 1.0, pinned=frozenset({0}))
    np.testing.assert_array_equal(project_feasible([0.6, 0.4], pinned), [0.0, 1.0])

    capped = PortfolioProblem(np.zeros(2), np.eye(2), 1.0, carbon=np.array([10.0, 2.0]), cap=6.0)
    np.testing.assert_allclose(project_feasible([1.0, 0.0], capped), [0.5, 0.5], atol=1e-12)


def test_projection_is_nearest_feasible_point():
    # compare against a dense search over the feasible part of the 3-simplex grid
    rng = np.random.default_rng(8)
    grid = simplex_grid(step=0.005)
    for seed in range(5):
        prob = random_problem(seed, cap_frac=0.5)
        y = rng.normal(0.3, 0.5, 3)
        w = project_feasible(y, prob)
        check_feasible(w, prob, tol=1e-12)
        feas = grid[grid @ prob.carbon <= prob.cap]
        best = np.min(np.linalg.norm(feas - y, axis=1))
        assert np.linalg.norm(w - y) <= best + 1e-12


# ------------------------------------------------------------------- solve

def test_solve_symmetric_identity():
    for mult in (0.1, 1.0, 5.0):
        sol = solve(PortfolioProblem(np.zeros(3), np.eye(3), mult))
        np.testing.assert_allclose(sol.weights, [1 / 3] * 3, atol=1e-9)
        assert sol.status is Status.CONVERGED


def test_solve_two_asset_calculus():
    sol = solve(PortfolioProblem(np.zeros(2), np.diag([1.0, 4.0]), 1.0))
    np.testing.assert_allclose(sol.weights, [0.8, 0.2], atol=1e-9)
    assert sol.objective == pytest.approx(math.sqrt(20) / 5, abs=1e-12)


def test_solve_cap_active_two_assets():
    # unconstrained optimum puts 0.8 on the dirty asset; the cap forces 0.5
    prob = PortfolioProblem(np.zeros(2), np.diag([1.0, 4.0]), 1.0, carbon=np.array([10.0, 2.0]), cap=6.0)
    sol = solve(prob)
    np.testing.assert_allclose(sol.weights, [0.5, 0.5], atol=1e-9)
    assert sol.kkt_residual <= 1e-8


def test_solve_pins_are_exact_zero():
    prob = random_problem(3, n=6, pins=(1, 4))
    sol = solve(prob)
    assert sol.weights[1] == 0.0 and sol.weights[4] == 0.0
    check_feasible(sol.weights, prob)


def test_solve_single_free_asset():
    prob = PortfolioProblem(np.zeros(3), np.eye(3), 1.0, pinned=frozenset({0, 2}))
    np.testing.assert_array_equal(solve(prob).weights, [0.0, 1.0, 0.0])


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("cap_frac", [None, 0.3, 0.8])
def test_solve_matches_grid(seed, cap_frac):
    prob = random_problem(seed, cap_frac=cap_frac)
    sol = solve(prob)
    check_feasible(sol.weights, prob)
    best = grid_oracle(prob)
    # the solver can only do better than the grid, and not by more than the grid's resolution
    assert sol.objective <= best + 1e-12
    assert best - sol.objective <= 1e-4
    if sol.status is Status.CONVERGED:
        assert sol.kkt_residual <= 1e-6


def test_solve_is_deterministic_and_start_independent():
    prob = random_problem(11, n=8, cap_frac=0.4)
    a, b = solve(prob), solve(prob)
    np.testing.assert_array_equal(a.weights, b.weights)
    c = solve(prob, start=np.eye(8)[3])
    np.testing.assert_allclose(a.weights, c.weights, atol=1e-6)


def test_solve_scale_invariance():
    prob = random_problem(5, n=5, cap_frac=0.6)
    base = solve(prob)
    for s in (0.1, 7.0):
        scaled = PortfolioProblem(s * prob.mu, s * s * prob.sigma, prob.multiplier, prob.mean_sign,
                                  prob.pinned, prob.carbon, prob.cap)
        sol = solve(scaled)
        np.testing.assert_allclose(sol.weights, base.weights, atol=1e-6)
        assert sol.objective == pytest.approx(s * base.objective, rel=1e-8)


def test_solve_iteration_limit_returns_feasible():
    prob = random_problem(2, n=20, cap_frac=0.5)
    sol = solve(prob, Tolerances(max_iterations=1))
    check_feasible(sol.weights, prob)
    assert sol.status is Status.ITERATION_LIMIT and sol.iterations == 1


def test_cap_multiplier_sign():
    # either slack by 1e-8 or active with a nonnegative multiplier: the capped optimum
    # can be no better than the uncapped one
    for seed in range(5):
        capped = random_problem(seed, n=6, cap_frac=0.3)
        free = PortfolioProblem(capped.mu, capped.sigma, capped.multiplier)
        s_cap, s_free = solve(capped), solve(free)
        slack = capped.cap - capped.carbon @ s_cap.weights
        if slack > 1e-8:
            np.testing.assert_allclose(s_cap.weights, s_free.weights, atol=1e-6)
        else:
            assert s_cap.objective >= s_free.objective - 1e-12


# --------------------------------------------------------------------- KKT

def test_kkt_examples():
    p2 = PortfolioProblem(np.zeros(2), np.diag([1.0, 4.0]), 1.0)
    assert kkt_residual([0.8, 0.2], p2) <= 1e-8
    assert kkt_residual([0.5, 0.5], p2) > 1e-3
    p3 = PortfolioProblem(np.zeros(3), np.eye(3), 1.0)
    assert kkt_residual([1 / 3] * 3, p3) <= 1e-10


# ---------------------------------------------------------------- gradient

@pytest.mark.parametrize("seed", range(10))
def test_gradient_finite_differences(seed):
    prob = random_problem(seed, n=5)
    rng = np.random.default_rng(100 + seed)
    h = 1e-6
    for _ in range(10):
        w = rng.dirichlet(np.ones(5))
        g = prob.gradient(w)
        fd = np.array([(prob.objective(w + h * e) - prob.objective(w - h * e)) / (2 * h)
                       for e in np.eye(5)])
        assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)
