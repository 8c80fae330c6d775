"""Exact solver against independent oracles.

Two oracles that share no code with the simplex: permutation enumeration
(uniform square instances have a permutation-matrix optimum) and the HiGHS
LP solver on the explicit coupling polytope.
"""
from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from scipy.optimize import linprog

from otkit.errors import CapacityError, InvalidInput
from otkit.exact import (
    DENSE_CAP_ENTRIES,
    ExactSolution,
    Infeasible,
    dense_gamma_bytes,
    solve_exact,
    solve_restricted,
)
from otkit.measures import (
    CostOracle,
    DiscreteMeasure,
    PointCloud,
    marginals,
    plan_cost,
    plan_to_json,
    uniform_measure,
)


def brute_force_uniform(xs: np.ndarray, xt: np.ndarray) -> float:
    """Enumerate permutations: exact optimum for uniform square instances."""
    n = xs.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(n)):
        total = sum(float(((xs[k] - xt[p]) ** 2).sum()) for k, p in enumerate(perm))
        best = min(best, total / n)
    return best


def linprog_objective(cost: np.ndarray, s: np.ndarray, d: np.ndarray) -> float:
    """LP oracle on the full coupling polytope (HiGHS)."""
    ns, nt = cost.shape
    a_eq = np.zeros((ns + nt, ns * nt))
    for i in range(ns):
        a_eq[i, i * nt:(i + 1) * nt] = 1.0
    for j in range(nt):
        a_eq[ns + j, j::nt] = 1.0
    res = linprog(
        cost.ravel(), A_eq=a_eq[:-1], b_eq=np.concatenate([s, d])[:-1],
        bounds=(0, None), method="highs",
    )
    assert res.status == 0, res.message
    return float(res.fun)


def random_instance(seed: int, uniform: bool):
    rng = np.random.default_rng(seed)
    ns, nt = int(rng.integers(2, 8)), int(rng.integers(2, 8))
    mu_s = _measure(rng.normal(size=(ns, 2)), rng, uniform)
    mu_t = _measure(rng.normal(size=(nt, 2)) + 0.5, rng, uniform)
    return mu_s, mu_t, CostOracle(mu_s.cloud, mu_t.cloud)


def _measure(points: np.ndarray, rng, uniform: bool) -> DiscreteMeasure:
    cloud = PointCloud(points)
    if uniform:
        return uniform_measure(cloud)
    w = rng.random(cloud.n_points) + 0.05
    return DiscreteMeasure(cloud, w / w.sum())


def check_certificate(sol: ExactSolution, oracle: CostOracle,
                      mu_s: DiscreteMeasure, mu_t: DiscreteMeasure) -> None:
    """Feasibility, complementary slackness, strong duality."""
    cost = oracle.block(np.arange(oracle.n_source), np.arange(oracle.n_target))
    slack = cost - sol.phi[:, None] - sol.psi[None, :]
    assert float(slack.min()) >= -1e-9
    tight = slack[sol.plan.i, sol.plan.j]
    assert float(np.abs(tight).max()) <= 1e-9
    dual = float(sol.phi @ mu_s.masses + sol.psi @ mu_t.masses)
    assert math.isclose(dual, sol.objective, rel_tol=1e-9, abs_tol=1e-9)


# ---------------------------------------------------------------------------


def test_one_by_one():
    mu_s = uniform_measure(PointCloud(np.array([[0.0, 0.0]])))
    mu_t = uniform_measure(PointCloud(np.array([[3.0, 4.0]])))
    sol = solve_exact(mu_s, mu_t, CostOracle(mu_s.cloud, mu_t.cloud))
    assert sol.objective == 25.0
    assert list(sol.plan.i) == [0] and list(sol.plan.j) == [0]
    assert sol.plan.mass[0] == 1.0


def test_identical_clouds_move_nothing():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(6, 2))
    mu = uniform_measure(PointCloud(pts))
    sol = solve_exact(mu, mu, CostOracle(mu.cloud, mu.cloud))
    assert sol.objective <= 1e-15
    assert np.array_equal(sol.plan.i, np.arange(6))
    assert np.array_equal(sol.plan.j, np.arange(6))


@pytest.mark.parametrize("seed", range(8))
def test_matches_permutation_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 6))
    xs, xt = rng.normal(size=(n, 2)), rng.normal(size=(n, 2)) + 1.0
    mu_s = uniform_measure(PointCloud(xs))
    mu_t = uniform_measure(PointCloud(xt))
    sol = solve_exact(mu_s, mu_t, CostOracle(mu_s.cloud, mu_t.cloud))
    expected = brute_force_uniform(xs, xt)
    assert math.isclose(sol.objective, expected, rel_tol=1e-12, abs_tol=1e-12)


@pytest.mark.parametrize("seed,uniform", [(s, u) for s in range(15) for u in (True, False)])
def test_matches_lp_oracle(seed, uniform):
    mu_s, mu_t, oracle = random_instance(seed, uniform)
    sol = solve_exact(mu_s, mu_t, oracle)
    cost = oracle.block(np.arange(oracle.n_source), np.arange(oracle.n_target))
    expected = linprog_objective(cost, mu_s.masses, mu_t.masses)
    assert math.isclose(sol.objective, expected, rel_tol=1e-9, abs_tol=1e-11)

    row, col = marginals(sol.plan)
    assert float(np.abs(row - mu_s.masses).max()) <= 1e-9
    assert float(np.abs(col - mu_t.masses).max()) <= 1e-9
    assert sol.plan.n_entries <= mu_s.n_points + mu_t.n_points - 1
    assert sol.is_basic
    check_certificate(sol, oracle, mu_s, mu_t)


def test_degenerate_ties_terminate():
    # every pair at one of two distances: maximal tie degeneracy
    xs = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
    mu_s = uniform_measure(PointCloud(xs))
    mu_t = uniform_measure(PointCloud(xs[::-1].copy()))
    oracle = CostOracle(mu_s.cloud, mu_t.cloud)
    sol = solve_exact(mu_s, mu_t, oracle)
    assert math.isclose(sol.objective, 0.0, abs_tol=1e-12)
    check_certificate(sol, oracle, mu_s, mu_t)


def test_zero_mass_points_are_skipped():
    pts_s = np.array([[0.0, 0.0], [5.0, 5.0], [1.0, 0.0]])
    pts_t = np.array([[0.0, 0.0], [1.0, 0.0]])
    mu_s = DiscreteMeasure(PointCloud(pts_s), np.array([0.5, 0.0, 0.5]))
    mu_t = uniform_measure(PointCloud(pts_t))
    oracle = CostOracle(mu_s.cloud, mu_t.cloud)
    sol = solve_exact(mu_s, mu_t, oracle)
    assert 1 not in set(sol.plan.i.tolist())
    assert math.isclose(sol.objective, 0.0, abs_tol=1e-15)
    check_certificate(sol, oracle, mu_s, mu_t)


def test_determinism():
    mu_s, mu_t, oracle = random_instance(99, uniform=False)
    a = solve_exact(mu_s, mu_t, oracle)
    b = solve_exact(mu_s, mu_t, oracle)
    assert plan_to_json(a.plan) == plan_to_json(b.plan)
    assert a.objective == b.objective
    assert np.array_equal(a.phi, b.phi) and np.array_equal(a.psi, b.psi)


def test_dense_cap():
    rng = np.random.default_rng(0)
    mu_s = uniform_measure(PointCloud(rng.normal(size=(2000, 2))))
    mu_t = uniform_measure(PointCloud(rng.normal(size=(2000, 2))))
    with pytest.raises(CapacityError):
        solve_exact(mu_s, mu_t, CostOracle(mu_s.cloud, mu_t.cloud))
    small_s, small_t, oracle = random_instance(1, uniform=True)
    with pytest.raises(CapacityError):
        solve_exact(small_s, small_t, oracle, dense_cap=3)


def test_dense_gamma_bytes():
    assert dense_gamma_bytes(1000, 1000) == 8_000_000
    assert dense_gamma_bytes(1, 1) == 8
    assert dense_gamma_bytes(3, 5) == 120
    with pytest.raises(InvalidInput):
        dense_gamma_bytes(0, 5)


# ---------------------------------------------------------------------------
# restricted solves
# ---------------------------------------------------------------------------


def test_restricted_full_support_matches_exact():
    mu_s, mu_t, oracle = random_instance(7, uniform=False)
    full = [(i, j) for i in range(mu_s.n_points) for j in range(mu_t.n_points)]
    a = solve_exact(mu_s, mu_t, oracle)
    b = solve_restricted(mu_s, mu_t, oracle, full)
    assert b is not Infeasible
    assert math.isclose(a.objective, b.objective, rel_tol=1e-12, abs_tol=1e-12)


def test_restricted_on_optimal_support():
    mu_s, mu_t, oracle = random_instance(21, uniform=True)
    ref = solve_exact(mu_s, mu_t, oracle)
    support = list(zip(ref.plan.i.tolist(), ref.plan.j.tolist()))
    sol = solve_restricted(mu_s, mu_t, oracle, support)
    assert sol is not Infeasible
    assert math.isclose(sol.objective, ref.objective, rel_tol=1e-12, abs_tol=1e-12)
    assert np.array_equal(sol.plan.i, ref.plan.i)
    assert np.array_equal(sol.plan.j, ref.plan.j)
    assert np.allclose(sol.plan.mass, ref.plan.mass, rtol=1e-12, atol=0)


def test_restricted_infeasible_support():
    rng = np.random.default_rng(2)
    mu_s = uniform_measure(PointCloud(rng.normal(size=(2, 2))))
    mu_t = uniform_measure(PointCloud(rng.normal(size=(2, 2))))
    oracle = CostOracle(mu_s.cloud, mu_t.cloud)
    # both sources forced onto target 0: column 1 starves
    assert solve_restricted(mu_s, mu_t, oracle, [(0, 0), (1, 0)]) is Infeasible


def test_restricted_disconnected_but_feasible():
    pts = np.array([[0.0, 0.0], [10.0, 0.0]])
    mu_s = DiscreteMeasure(PointCloud(pts), np.array([0.3, 0.7]))
    mu_t = DiscreteMeasure(PointCloud(pts + 0.1), np.array([0.3, 0.7]))
    oracle = CostOracle(mu_s.cloud, mu_t.cloud)
    sol = solve_restricted(mu_s, mu_t, oracle, [(0, 0), (1, 1)])
    assert sol is not Infeasible
    expected = 0.3 * oracle.entry(0, 0) + 0.7 * oracle.entry(1, 1)
    assert math.isclose(sol.objective, expected, rel_tol=1e-12)


def test_restricted_bad_inputs():
    mu_s, mu_t, oracle = random_instance(3, uniform=True)
    with pytest.raises(InvalidInput):
        solve_restricted(mu_s, mu_t, oracle, [])
    with pytest.raises(InvalidInput):
        solve_restricted(mu_s, mu_t, oracle, [(0, mu_t.n_points)])
    with pytest.raises(CapacityError):
        full = [(i, j) for i in range(mu_s.n_points) for j in range(mu_t.n_points)]
        solve_restricted(mu_s, mu_t, oracle, full, dense_cap=2)
