"""Discrete measures, lazy pairwise costs, and sparse transport plans.

The fast-solver path never materializes the full ``n_source x n_target``
cost matrix.  ``CostOracle`` evaluates single entries or bounded blocks on
demand, and every threshold-sensitive consumer (support extraction,
feasibility checks, plan costs) goes through the same block primitive so
that floating-point results are identical across code paths.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInput

MASS_TOL = 1e-9  # tolerance on "masses sum to one"


class Metric(Enum):
    """Ground cost between source and target points."""

    SQUARED_EUCLIDEAN = "squared_euclidean"


@dataclass(frozen=True, eq=False)
class PointCloud:
    """An ordered set of points in R^d.

    Parameters
    ----------
    points : (n, d) array_like
        One point per row.  Stored as float64 and frozen; n >= 1, d >= 1.
    """

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2:
            raise InvalidInput(f"points must be a 2-d array, got ndim={pts.ndim}")
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise InvalidInput(f"points must be (n>=1, d>=1), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise InvalidInput("points must be finite")
        pts = np.ascontiguousarray(pts)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """A point cloud with a probability mass per point.

    Masses must be nonnegative and sum to one within ``MASS_TOL``.
    """

    cloud: PointCloud
    masses: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.masses, dtype=np.float64)
        if m.ndim != 1 or m.shape[0] != self.cloud.n_points:
            raise InvalidInput(
                f"masses must be a vector of length {self.cloud.n_points}, "
                f"got shape {m.shape}"
            )
        if not np.all(np.isfinite(m)) or np.any(m < 0.0):
            raise InvalidInput("masses must be finite and nonnegative")
        total = float(m.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise InvalidInput(f"masses must sum to 1 within {MASS_TOL}, got {total!r}")
        m = np.ascontiguousarray(m)
        m.setflags(write=False)
        object.__setattr__(self, "masses", m)

    @property
    def n_points(self) -> int:
        return self.cloud.n_points


def uniform_measure(cloud: PointCloud) -> DiscreteMeasure:
    """Uniform masses 1/n on every point, renormalized to sum exactly to 1.

    The last mass absorbs the ulp-scale residual of summing n copies of 1/n.
    """
    n = cloud.n_points
    m = np.full(n, 1.0 / n)
    for _ in range(32):
        residual = 1.0 - float(m.sum())
        if residual == 0.0:
            break
        m[-1] += residual
    return DiscreteMeasure(cloud, m)


@dataclass(frozen=True, eq=False)
class CostOracle:
    """Lazy squared-Euclidean costs between a source and a target cloud.

    ``entry`` and ``block`` share one arithmetic path, so an entry computed
    alone is bit-identical to the same entry inside a block.  Blocks are the
    unit of work for the O(n)-memory sweeps in the dual solver.
    """

    source: PointCloud
    target: PointCloud
    metric: Metric = Metric.SQUARED_EUCLIDEAN

    def __post_init__(self) -> None:
        if self.source.dim != self.target.dim:
            raise InvalidInput(
                f"source dim {self.source.dim} != target dim {self.target.dim}"
            )
        if not isinstance(self.metric, Metric):
            raise InvalidInput(f"unknown metric {self.metric!r}")

    @property
    def n_source(self) -> int:
        return self.source.n_points

    @property
    def n_target(self) -> int:
        return self.target.n_points

    def block(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Cost submatrix for integer index vectors rows x cols."""
        xs = self.source.points[rows]
        xt = self.target.points[cols]
        diff = xs[:, None, :] - xt[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)

    def row_block(self, row_start: int, row_stop: int) -> np.ndarray:
        """Costs for a contiguous strip of source rows against all targets."""
        xs = self.source.points[row_start:row_stop]
        diff = xs[:, None, :] - self.target.points[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)

    def entry(self, i: int, j: int) -> float:
        n_s, n_t = self.n_source, self.n_target
        if not (0 <= i < n_s):
            raise IndexError(f"source index {i} out of range [0, {n_s})")
        if not (0 <= j < n_t):
            raise IndexError(f"target index {j} out of range [0, {n_t})")
        block = self.block(np.array([i]), np.array([j]))
        return float(block[0, 0])

    def gather(self, i: np.ndarray, j: np.ndarray) -> np.ndarray:
        """Costs for paired index vectors (i_k, j_k)."""
        diff = self.source.points[i] - self.target.points[j]
        return np.einsum("ij,ij->i", diff, diff)


def cost_entry(oracle: CostOracle, i: int, j: int) -> float:
    """Single cost entry C[i, j]; raises IndexError out of bounds."""
    return oracle.entry(i, j)


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """A sparse coupling: entries (i, j, mass) with positive masses.

    Entries are stored sorted by (i, j); duplicates are rejected.  Total
    mass must be 1 within ``MASS_TOL``.  Zeros are never stored.
    """

    n_source: int
    n_target: int
    i: np.ndarray
    j: np.ndarray
    mass: np.ndarray

    def __post_init__(self) -> None:
        if self.n_source < 1 or self.n_target < 1:
            raise InvalidInput("plan dimensions must be >= 1")
        i = np.asarray(self.i, dtype=np.int64)
        j = np.asarray(self.j, dtype=np.int64)
        m = np.asarray(self.mass, dtype=np.float64)
        if not (i.ndim == j.ndim == m.ndim == 1 and i.size == j.size == m.size):
            raise InvalidInput("entry arrays must be 1-d and of equal length")
        if i.size == 0:
            raise InvalidInput("a transport plan must have at least one entry")
        if np.any(i < 0) or np.any(i >= self.n_source):
            raise InvalidInput("source index out of range")
        if np.any(j < 0) or np.any(j >= self.n_target):
            raise InvalidInput("target index out of range")
        if not np.all(np.isfinite(m)) or np.any(m <= 0.0):
            raise InvalidInput("entry masses must be finite and positive")
        total = float(m.sum())
        if abs(total - 1.0) > MASS_TOL:
            raise InvalidInput(f"plan mass must sum to 1 within {MASS_TOL}, got {total!r}")
        order = np.lexsort((j, i))
        i, j, m = i[order], j[order], m[order]
        same = (i[1:] == i[:-1]) & (j[1:] == j[:-1])
        if np.any(same):
            raise InvalidInput("duplicate (i, j) entries in plan")
        for arr, name in ((i, "i"), (j, "j"), (m, "mass")):
            arr = np.ascontiguousarray(arr)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n_entries(self) -> int:
        return self.i.size

    def state_bytes(self) -> int:
        """Bytes held by the entry arrays."""
        return self.i.nbytes + self.j.nbytes + self.mass.nbytes


def plan_cost(plan: TransportPlan, oracle: CostOracle) -> float:
    """Total transported cost sum_k mass_k * C[i_k, j_k]."""
    if plan.n_source != oracle.n_source or plan.n_target != oracle.n_target:
        raise InvalidInput(
            f"plan is {plan.n_source}x{plan.n_target}, oracle is "
            f"{oracle.n_source}x{oracle.n_target}"
        )
    return float(oracle.gather(plan.i, plan.j) @ plan.mass)


def marginals(plan: TransportPlan) -> tuple[np.ndarray, np.ndarray]:
    """Row-sum and column-sum vectors of the plan."""
    row = np.bincount(plan.i, weights=plan.mass, minlength=plan.n_source)
    col = np.bincount(plan.j, weights=plan.mass, minlength=plan.n_target)
    return row, col


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def _parse_header(tokens: list[str]) -> tuple[int, bool] | None:
    """Recognize x0,x1,...[,mass]; None means the row is data, not a header."""
    try:
        for tok in tokens:
            float(tok)
        return None
    except ValueError:
        pass
    has_mass = tokens[-1].strip().lower() == "mass"
    coords = tokens[:-1] if has_mass else tokens
    expected = [f"x{k}" for k in range(len(coords))]
    if [t.strip().lower() for t in coords] != expected or not coords:
        raise InvalidInput(
            f"line 1: header must be x0,x1,...[,mass], got {','.join(tokens)!r}"
        )
    return len(coords), has_mass


def read_point_cloud_csv(path: str) -> DiscreteMeasure:
    """Read a point cloud CSV; no header (or no mass column) means uniform.

    Format: one point per line, comma-separated coordinates, optional final
    ``mass`` column declared by a ``x0,x1,...,mass`` header line.
    """
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh)]
    rows = [r for r in rows if r and any(tok.strip() for tok in r)]
    if not rows:
        raise InvalidInput(f"{path}: empty point cloud file")

    header = _parse_header(rows[0])
    if header is None:
        dim, has_mass = len(rows[0]), False
        data_rows, first_line = rows, 1
    else:
        dim, has_mass = header
        data_rows, first_line = rows[1:], 2
        if not data_rows:
            raise InvalidInput(f"{path}: header but no data rows")

    width = dim + (1 if has_mass else 0)
    values = np.empty((len(data_rows), width))
    for k, row in enumerate(data_rows):
        line = first_line + k
        if len(row) != width:
            raise InvalidInput(
                f"{path}: line {line}: expected {width} columns, got {len(row)}"
            )
        try:
            values[k] = [float(tok) for tok in row]
        except ValueError as exc:
            raise InvalidInput(f"{path}: line {line}: {exc}") from None

    cloud = PointCloud(values[:, :dim])
    if has_mass:
        return DiscreteMeasure(cloud, values[:, dim])
    return uniform_measure(cloud)


def write_point_cloud_csv(measure: DiscreteMeasure, path: str, with_masses: bool = False) -> None:
    """Write a measure's points (and optionally masses) in the CSV format."""
    pts = measure.cloud.points
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if with_masses:
            writer.writerow([f"x{k}" for k in range(measure.cloud.dim)] + ["mass"])
            for row, m in zip(pts, measure.masses):
                writer.writerow([repr(float(v)) for v in row] + [repr(float(m))])
        else:
            for row in pts:
                writer.writerow([repr(float(v)) for v in row])


def plan_to_json(plan: TransportPlan) -> str:
    """Serialize a plan to the interchange JSON (entries sorted by (i, j))."""
    entries = [
        [int(a), int(b), float(m)]
        for a, b, m in zip(plan.i, plan.j, plan.mass)
    ]
    return json.dumps(
        {"n_source": plan.n_source, "n_target": plan.n_target, "entries": entries}
    )


def plan_from_json(text: str) -> TransportPlan:
    """Parse the interchange JSON back into a TransportPlan."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"bad plan JSON: {exc}") from None
    try:
        n_s, n_t = int(obj["n_source"]), int(obj["n_target"])
        entries = obj["entries"]
        i = np.array([e[0] for e in entries], dtype=np.int64)
        j = np.array([e[1] for e in entries], dtype=np.int64)
        m = np.array([e[2] for e in entries], dtype=np.float64)
    except (KeyError, TypeError, IndexError) as exc:
        raise InvalidInput(f"bad plan JSON structure: {exc}") from None
    return TransportPlan(n_s, n_t, i, j, m)
