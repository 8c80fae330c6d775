"""Measure, cost-oracle, and plan contracts."""
from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from otkit.errors import InvalidInput
from otkit.measures import (
    CostOracle,
    DiscreteMeasure,
    PointCloud,
    TransportPlan,
    cost_entry,
    marginals,
    plan_cost,
    plan_from_json,
    plan_to_json,
    read_point_cloud_csv,
    uniform_measure,
    write_point_cloud_csv,
)


@pytest.fixture
def small_oracle() -> CostOracle:
    src = PointCloud(np.array([[0.0, 0.0], [1.0, 0.0]]))
    tgt = PointCloud(np.array([[3.0, 4.0], [0.0, 1.0], [1.0, 0.0]]))
    return CostOracle(src, tgt)


# ---------------------------------------------------------------------------
# clouds and measures
# ---------------------------------------------------------------------------


def test_point_cloud_rejects_bad_shapes():
    with pytest.raises(InvalidInput):
        PointCloud(np.zeros((0, 2)))
    with pytest.raises(InvalidInput):
        PointCloud(np.zeros((3, 0)))
    with pytest.raises(InvalidInput):
        PointCloud(np.zeros(4))
    with pytest.raises(InvalidInput):
        PointCloud(np.array([[0.0, np.nan]]))


def test_point_cloud_is_frozen():
    cloud = PointCloud(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        cloud.points[0, 0] = 1.0


def test_measure_validation():
    cloud = PointCloud(np.zeros((3, 1)))
    with pytest.raises(InvalidInput):
        DiscreteMeasure(cloud, np.array([0.5, 0.5]))  # wrong length
    with pytest.raises(InvalidInput):
        DiscreteMeasure(cloud, np.array([0.7, 0.5, -0.2]))  # negative
    with pytest.raises(InvalidInput):
        DiscreteMeasure(cloud, np.array([0.5, 0.5, 0.5]))  # sums to 1.5
    # within tolerance of one is accepted
    DiscreteMeasure(cloud, np.array([0.5, 0.25, 0.25 + 5e-10]))


def test_uniform_measure_sums_to_one_exactly():
    for n in (1, 3, 7, 11, 97, 1000):
        mu = uniform_measure(PointCloud(np.zeros((n, 2))))
        assert float(mu.masses.sum()) == 1.0
        assert np.allclose(mu.masses, 1.0 / n, rtol=1e-12, atol=0)


# ---------------------------------------------------------------------------
# costs
# ---------------------------------------------------------------------------


def test_cost_entry_hand_values(small_oracle):
    # (0,0) vs (3,4): 9 + 16 = 25, exact in float64
    assert cost_entry(small_oracle, 0, 0) == 25.0
    # (1,0) vs (1,0): identical points
    assert cost_entry(small_oracle, 1, 2) == 0.0
    # (1,0) vs (0,1): 1 + 1
    assert cost_entry(small_oracle, 1, 1) == 2.0


def test_cost_entry_out_of_bounds(small_oracle):
    with pytest.raises(IndexError):
        cost_entry(small_oracle, 2, 0)
    with pytest.raises(IndexError):
        cost_entry(small_oracle, 0, 3)
    with pytest.raises(IndexError):
        cost_entry(small_oracle, -1, 0)


def test_cost_symmetry_under_swap(small_oracle):
    swapped = CostOracle(small_oracle.target, small_oracle.source)
    for i in range(2):
        for j in range(3):
            assert cost_entry(small_oracle, i, j) == cost_entry(swapped, j, i)


def test_oracle_rejects_dim_mismatch():
    with pytest.raises(InvalidInput):
        CostOracle(PointCloud(np.zeros((2, 2))), PointCloud(np.zeros((2, 3))))


@given(st.integers(0, 9), st.integers(0, 9), st.integers(1, 6), st.integers(0, 1000))
def test_block_matches_entry_bitwise(i, j, dim, seed):
    """Entries inside a block equal the same entry computed alone."""
    rng = np.random.default_rng(seed)
    oracle = CostOracle(
        PointCloud(rng.normal(size=(10, dim))),
        PointCloud(rng.normal(size=(10, dim))),
    )
    block = oracle.block(np.arange(10), np.arange(10))
    assert block[i, j] == oracle.entry(i, j)
    strip = oracle.row_block(i, i + 1)
    assert strip[0, j] == oracle.entry(i, j)


# ---------------------------------------------------------------------------
# plans
# ---------------------------------------------------------------------------


def test_plan_validation():
    with pytest.raises(InvalidInput):  # empty plans are invalid
        TransportPlan(2, 2, np.array([]), np.array([]), np.array([]))
    with pytest.raises(InvalidInput):  # out of range
        TransportPlan(2, 2, np.array([2]), np.array([0]), np.array([1.0]))
    with pytest.raises(InvalidInput):  # duplicate pair
        TransportPlan(2, 2, np.array([0, 0]), np.array([0, 0]), np.array([0.5, 0.5]))
    with pytest.raises(InvalidInput):  # zero mass entry
        TransportPlan(2, 2, np.array([0, 1]), np.array([0, 1]), np.array([1.0, 0.0]))
    with pytest.raises(InvalidInput):  # does not sum to one
        TransportPlan(2, 2, np.array([0, 1]), np.array([0, 1]), np.array([0.5, 0.4]))


def test_plan_sorts_entries():
    plan = TransportPlan(
        2, 2, np.array([1, 0, 0]), np.array([0, 1, 0]), np.array([0.5, 0.25, 0.25])
    )
    assert list(plan.i) == [0, 0, 1]
    assert list(plan.j) == [0, 1, 0]
    assert list(plan.mass) == [0.25, 0.25, 0.5]


def test_marginals_hand_example():
    plan = TransportPlan(
        2, 2, np.array([0, 0, 1]), np.array([0, 1, 1]), np.array([0.25, 0.25, 0.5])
    )
    row, col = marginals(plan)
    assert np.allclose(row, [0.5, 0.5], atol=0)
    assert np.allclose(col, [0.25, 0.75], atol=0)


def test_plan_cost_hand_example(small_oracle):
    # 0.5 * C[0,1] + 0.5 * C[1,2] = 0.5 * (0^2 + 1^2) + 0.5 * 0 = 0.5
    plan = TransportPlan(2, 3, np.array([0, 1]), np.array([1, 2]), np.array([0.5, 0.5]))
    assert math.isclose(plan_cost(plan, small_oracle), 0.5, rel_tol=1e-15)


def test_plan_cost_dimension_mismatch(small_oracle):
    plan = TransportPlan(3, 3, np.array([2]), np.array([0]), np.array([1.0]))
    with pytest.raises(InvalidInput):
        plan_cost(plan, small_oracle)


@given(st.integers(0, 10_000))
def test_marginals_sum_to_total_mass(seed):
    rng = np.random.default_rng(seed)
    ns, nt = int(rng.integers(1, 6)), int(rng.integers(1, 6))
    k = int(rng.integers(1, ns * nt + 1))
    flat = rng.choice(ns * nt, size=k, replace=False)
    mass = rng.random(k) + 1e-3
    mass /= mass.sum()
    plan = TransportPlan(ns, nt, flat // nt, flat % nt, mass)
    row, col = marginals(plan)
    assert math.isclose(row.sum(), 1.0, rel_tol=0, abs_tol=1e-12)
    assert math.isclose(col.sum(), 1.0, rel_tol=0, abs_tol=1e-12)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def test_csv_without_header_is_uniform(tmp_path):
    path = tmp_path / "cloud.csv"
    path.write_text("0.0,1.0\n2.0,3.0\n4.0,5.0\n")
    mu = read_point_cloud_csv(str(path))
    assert mu.cloud.dim == 2
    assert np.allclose(mu.masses, 1 / 3, atol=1e-15)


def test_csv_with_mass_column(tmp_path):
    path = tmp_path / "cloud.csv"
    path.write_text("x0,x1,mass\n0.0,1.0,0.25\n2.0,3.0,0.75\n")
    mu = read_point_cloud_csv(str(path))
    assert np.all(mu.masses == np.array([0.25, 0.75]))


def test_csv_header_without_mass_is_uniform(tmp_path):
    path = tmp_path / "cloud.csv"
    path.write_text("x0,x1\n0.0,1.0\n2.0,3.0\n")
    mu = read_point_cloud_csv(str(path))
    assert np.allclose(mu.masses, 0.5, atol=0)


def test_csv_errors_carry_line_numbers(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("0.0,1.0\n2.0\n")
    with pytest.raises(InvalidInput, match="line 2"):
        read_point_cloud_csv(str(path))
    path.write_text("x0,x1,mass\n0.0,oops,0.5\n")
    with pytest.raises(InvalidInput, match="line 2"):
        read_point_cloud_csv(str(path))
    path.write_text("a,b\n1.0,2.0\n")
    with pytest.raises(InvalidInput, match="header"):
        read_point_cloud_csv(str(path))
    path.write_text("")
    with pytest.raises(InvalidInput, match="empty"):
        read_point_cloud_csv(str(path))


def test_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(3)
    cloud = PointCloud(rng.normal(size=(5, 3)))
    mass = rng.random(5)
    mu = DiscreteMeasure(cloud, mass / mass.sum())
    path = tmp_path / "rt.csv"
    write_point_cloud_csv(mu, str(path), with_masses=True)
    back = read_point_cloud_csv(str(path))
    assert np.array_equal(back.cloud.points, mu.cloud.points)
    assert np.array_equal(back.masses, mu.masses)


def test_plan_json_roundtrip():
    plan = TransportPlan(
        3, 2, np.array([0, 1, 2]), np.array([1, 0, 1]), np.array([0.2, 0.3, 0.5])
    )
    text = plan_to_json(plan)
    obj = json.loads(text)
    assert obj["n_source"] == 3 and obj["n_target"] == 2
    assert obj["entries"][0] == [0, 1, 0.2]
    back = plan_from_json(text)
    assert np.array_equal(back.i, plan.i)
    assert np.array_equal(back.j, plan.j)
    assert np.array_equal(back.mass, plan.mass)


def test_plan_json_rejects_garbage():
    with pytest.raises(InvalidInput):
        plan_from_json("{not json")
    with pytest.raises(InvalidInput):
        plan_from_json(json.dumps({"n_source": 2, "entries": [[0, 0, 1.0]]}))
