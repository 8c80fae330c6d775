"""Sparse stochastic solver for the transport dual.

Works entirely on the dual: a potential per source point and per target
point, ascended one random coordinate at a time.  Each coordinate update
refines the raw stochastic gradient (the point's mass) against a running
per-coordinate table, then a sampled partner pair is projected back toward
the half space ``phi_i + psi_j <= C_ij``.  Every ``ctransform_period``
epochs the target potentials are restored to the exact c-transform of the
source potentials, which is also how feasible potentials are produced on
demand.

A near-tight support is extracted at an absolute slack threshold and
tried as a plan directly: when it forms a forest (plus at most a small
cyclic core drained greedily) its flows are read off combinatorially and
certified against the current feasible pair.  Failing that, the
restricted transportation problem on the support, widened with priced
arcs and cached completion arcs, is solved exactly, warm-started from
the previous basis tree.  Re-projecting the restricted basis potentials
yields a feasible dual pair, and when the restricted cost matches either
that pair or the incumbent the plan is provably optimal and the gap
collapses.  Otherwise violated arcs are priced into the next rung, the
projected potentials are adopted whenever they improve the dual value,
and a rung that achieves neither doubles the slack threshold (at most 20
doublings, matching the recovery ladder for an infeasible support).
Small grids that exhaust the ladder uncertified are settled by one
full-grid exact solve.  Memory stays linear in the number of points
throughout: cost entries are produced in bounded blocks and the full
matrix never exists on the sparse path.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import CapacityError, Diverged, InvalidInput, SupportEmpty
from .exact import Infeasible, solve_exact, solve_restricted
from .measures import CostOracle, DiscreteMeasure, TransportPlan

# Transient cost-block budget (entries); independent of problem size.
_CHUNK_ENTRIES = 1 << 18

_COST_SAMPLE = 1000  # entries sampled to set the cost scale


class StepDecay(Enum):
    CONSTANT = "constant"
    INVERSE_SQRT = "inverse_sqrt"


@dataclass(frozen=True)
class SolverConfig:
    """Solver knobs.  ``base_step`` of None means one tenth of the median
    sampled cost, which keeps behavior invariant under coordinate scaling."""

    max_epochs: int = 1000
    base_step: float | None = None
    step_decay: StepDecay = StepDecay.INVERSE_SQRT
    support_tolerance_rel: float = 1e-6
    gap_tolerance_rel: float = 1e-6
    ctransform_period: int = 10
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_epochs < 1:
            raise InvalidInput("max_epochs must be >= 1")
        if self.base_step is not None and not self.base_step >= 0.0:
            raise InvalidInput("base_step must be >= 0")
        if not isinstance(self.step_decay, StepDecay):
            raise InvalidInput(f"unknown step decay {self.step_decay!r}")
        if not 0.0 < self.support_tolerance_rel < 1.0:
            raise InvalidInput("support_tolerance_rel must be in (0, 1)")
        if not self.gap_tolerance_rel > 0.0:
            raise InvalidInput("gap_tolerance_rel must be > 0")
        if self.ctransform_period < 1:
            raise InvalidInput("ctransform_period must be >= 1")
        if self.seed < 0:
            raise InvalidInput("seed must be >= 0")


@dataclass(frozen=True, eq=False)
class DualPotentials:
    """One potential per source point (phi) and per target point (psi)."""

    phi: np.ndarray
    psi: np.ndarray

    def __post_init__(self) -> None:
        phi = np.asarray(self.phi, dtype=np.float64)
        psi = np.asarray(self.psi, dtype=np.float64)
        if phi.ndim != 1 or psi.ndim != 1:
            raise InvalidInput("potentials must be vectors")
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "psi", psi)


@dataclass
class SvrState:
    """Per-coordinate last-seen gradient tables and visit bookkeeping.

    The refined gradient for coordinate i is
    ``g - grad_acc[i] + mean(grad_acc)``; after the step the table entry is
    replaced by g.  Means are maintained incrementally.
    """

    grad_phi_acc: np.ndarray
    grad_psi_acc: np.ndarray
    visit_phi: np.ndarray
    visit_psi: np.ndarray
    step_index: int = 0
    mean_phi: float = 0.0
    mean_psi: float = 0.0


@dataclass
class SolverState:
    """Mutable in-progress solver state, confined to one execution context."""

    phi: np.ndarray
    psi: np.ndarray
    svr: SvrState
    rng: np.random.Generator
    n_source: int
    n_target: int
    lambda0: float
    eps_base: float
    cost_scale: float
    epoch: int = 0
    diverged: bool = False
    peak_state_bytes: int = 0
    dense_rescue_spent: bool = False
    aux_arcs: set | None = None
    basis_pairs: list | None = None

    def state_bytes(self, plan_bytes: int = 0) -> int:
        """Potentials + refinement tables + (optionally) the sparse plan."""
        core = (self.phi.nbytes + self.psi.nbytes
                + self.svr.grad_phi_acc.nbytes + self.svr.grad_psi_acc.nbytes
                + self.svr.visit_phi.nbytes + self.svr.visit_psi.nbytes)
        return core + plan_bytes

    def note_bytes(self, plan_bytes: int = 0) -> None:
        self.peak_state_bytes = max(self.peak_state_bytes, self.state_bytes(plan_bytes))


@dataclass(frozen=True, eq=False)
class OTSolution:
    plan: TransportPlan
    potentials: DualPotentials
    primal_cost: float
    dual_value: float
    relative_gap: float
    epochs_used: int
    peak_state_bytes: int


# ---------------------------------------------------------------------------
# chunked sweeps (the only way cost entries are produced in bulk here)
# ---------------------------------------------------------------------------


def _row_chunks(n_rows: int, n_cols: int):
    step = max(1, _CHUNK_ENTRIES // max(n_cols, 1))
    for lo in range(0, n_rows, step):
        yield lo, min(lo + step, n_rows)


def _ctransform_psi(phi: np.ndarray, oracle: CostOracle) -> np.ndarray:
    """psi_j = min_i (C_ij - phi_i), computed in O(n)-memory strips."""
    psi = np.full(oracle.n_target, np.inf)
    for lo, hi in _row_chunks(oracle.n_source, oracle.n_target):
        block = oracle.row_block(lo, hi) - phi[lo:hi, None]
        np.minimum(psi, block.min(axis=0), out=psi)
    return psi


def _ctransform_phi(psi: np.ndarray, oracle: CostOracle) -> np.ndarray:
    """phi_i = min_j (C_ij - psi_j), the transform on the source side."""
    phi = np.empty(oracle.n_source)
    for lo, hi in _row_chunks(oracle.n_source, oracle.n_target):
        block = oracle.row_block(lo, hi) - psi[None, :]
        phi[lo:hi] = block.min(axis=1)
    return phi


def _max_violation(phi: np.ndarray, psi: np.ndarray, oracle: CostOracle) -> float:
    """max over all pairs of phi_i + psi_j - C_ij (<= 0 means feasible)."""
    worst = -np.inf
    for lo, hi in _row_chunks(oracle.n_source, oracle.n_target):
        block = oracle.row_block(lo, hi)
        viol = phi[lo:hi, None] + psi[None, :] - block
        worst = max(worst, float(viol.max()))
    return worst


def _priced_rows(phi: np.ndarray, psi: np.ndarray, oracle: CostOracle,
                 tol: float) -> list[tuple[int, int]]:
    """Most-violated pair per source row, among phi_i + psi_j - C_ij > tol.

    The pricing step of delayed column generation: arcs violated by the
    restricted basis potentials are exactly the arcs whose admission makes
    the next restricted solve strictly better.
    """
    out: list[tuple[int, int]] = []
    for lo, hi in _row_chunks(oracle.n_source, oracle.n_target):
        viol = phi[lo:hi, None] + psi[None, :] - oracle.row_block(lo, hi)
        jbest = viol.argmax(axis=1)
        vbest = viol[np.arange(hi - lo), jbest]
        rows = np.nonzero(vbest > tol)[0]
        out.extend(zip((rows + lo).tolist(), jbest[rows].tolist()))
    return out


def project_feasible(potentials: DualPotentials, oracle: CostOracle) -> DualPotentials:
    """Restore feasibility: keep phi, replace psi by its c-transform.

    Idempotent, and never lowers the dual value of a feasible pair since
    the c-transform is the largest feasible psi for the given phi.
    """
    if potentials.phi.shape[0] != oracle.n_source:
        raise InvalidInput("phi length does not match the oracle")
    return DualPotentials(potentials.phi.copy(), _ctransform_psi(potentials.phi, oracle))


def extract_support(potentials: DualPotentials, oracle: CostOracle,
                    eps_abs: float) -> list[tuple[int, int]]:
    """Pairs whose slack C_ij - phi_i - psi_j is at most eps_abs, by (i, j)."""
    if eps_abs < 0.0:
        raise InvalidInput("eps_abs must be >= 0")
    phi, psi = potentials.phi, potentials.psi
    if phi.shape[0] != oracle.n_source or psi.shape[0] != oracle.n_target:
        raise InvalidInput("potential lengths do not match the oracle")
    out: list[tuple[int, int]] = []
    for lo, hi in _row_chunks(oracle.n_source, oracle.n_target):
        slack = oracle.row_block(lo, hi) - phi[lo:hi, None] - psi[None, :]
        ii, jj = np.nonzero(slack <= eps_abs)
        out.extend(zip((ii + lo).tolist(), jj.tolist()))
    if not out:
        raise SupportEmpty(f"no pairs within slack {eps_abs!r}")
    return out


def dual_objective(potentials: DualPotentials, mu_s: DiscreteMeasure,
                   mu_t: DiscreteMeasure) -> float:
    """sum_i phi_i mu_s_i + sum_j psi_j mu_t_j."""
    if (potentials.phi.shape[0] != mu_s.n_points
            or potentials.psi.shape[0] != mu_t.n_points):
        raise InvalidInput("potential lengths do not match the measures")
    return float(potentials.phi @ mu_s.masses + potentials.psi @ mu_t.masses)


# ---------------------------------------------------------------------------
# stochastic iteration
# ---------------------------------------------------------------------------


def init_state(mu_s: DiscreteMeasure, mu_t: DiscreteMeasure, oracle: CostOracle,
               cfg: SolverConfig) -> SolverState:
    """Zero potentials, zero tables, and data-derived step/tolerance scales."""
    _check_dims(mu_s, mu_t, oracle)
    ns, nt = oracle.n_source, oracle.n_target
    sample_rng = np.random.default_rng((cfg.seed, 0x5CA1E))
    si = sample_rng.integers(0, ns, size=_COST_SAMPLE)
    tj = sample_rng.integers(0, nt, size=_COST_SAMPLE)
    sample = oracle.gather(si, tj)
    scale = float(np.median(sample))
    if scale <= 0.0:
        positive = sample[sample > 0.0]
        scale = float(np.median(positive)) if positive.size else 1.0
    lambda0 = (cfg.base_step if cfg.base_step is not None else scale / 10.0)
    state = SolverState(
        phi=np.zeros(ns),
        psi=np.zeros(nt),
        svr=SvrState(
            grad_phi_acc=np.zeros(ns),
            grad_psi_acc=np.zeros(nt),
            visit_phi=np.zeros(ns, dtype=np.int64),
            visit_psi=np.zeros(nt, dtype=np.int64),
        ),
        rng=np.random.default_rng(cfg.seed),
        n_source=ns,
        n_target=nt,
        lambda0=lambda0,
        eps_base=cfg.support_tolerance_rel * scale,
        cost_scale=scale,
    )
    state.note_bytes()
    return state


def sgd_epoch(state: SolverState, mu_s: DiscreteMeasure, mu_t: DiscreteMeasure,
              oracle: CostOracle, cfg: SolverConfig) -> SolverState:
    """One pass of n_s + n_t randomized coordinate updates, in place.

    Per step: sample a coordinate, ascend it along the refined gradient,
    then sample a partner on the other side and project the pair halfway
    onto its half space if violated.  A zero step size skips the update
    entirely, projection included.
    """
    ns, nt = state.n_source, state.n_target
    n_total = ns + nt
    svr = state.svr
    coords = state.rng.integers(0, n_total, size=n_total)
    partner_j = state.rng.integers(0, nt, size=n_total)
    partner_i = state.rng.integers(0, ns, size=n_total)

    phi, psi = state.phi, state.psi
    acc_p, acc_q = svr.grad_phi_acc, svr.grad_psi_acc
    visit_p, visit_q = svr.visit_phi, svr.visit_psi
    mean_p, mean_q = svr.mean_phi, svr.mean_psi
    ms, mt = mu_s.masses, mu_t.masses
    xs, xt = oracle.source.points, oracle.target.points
    lam0 = state.lambda0
    inv_sqrt = cfg.step_decay is StepDecay.INVERSE_SQRT
    t = svr.step_index

    # overflow here is legal input behavior: it is detected after the pass
    # and surfaces as the diverged flag, so the warnings carry no signal
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_total):
            lam = lam0 / math.sqrt(1.0 + t / n_total) if inv_sqrt else lam0
            t += 1
            if lam == 0.0:
                continue
            c = int(coords[k])
            if c < ns:
                i = c
                g = ms[i]
                r = g - acc_p[i] + mean_p
                mean_p += (g - acc_p[i]) / ns
                acc_p[i] = g
                visit_p[i] += 1
                phi[i] += lam * r
                j = int(partner_j[k])
                d = xs[i] - xt[j]
                v = phi[i] + psi[j] - float(d @ d)
                if v > 0.0:
                    v *= 0.5
                    phi[i] -= v
                    psi[j] -= v
            else:
                j = c - ns
                g = mt[j]
                r = g - acc_q[j] + mean_q
                mean_q += (g - acc_q[j]) / nt
                acc_q[j] = g
                visit_q[j] += 1
                psi[j] += lam * r
                i = int(partner_i[k])
                d = xs[i] - xt[j]
                v = phi[i] + psi[j] - float(d @ d)
                if v > 0.0:
                    v *= 0.5
                    phi[i] -= v
                    psi[j] -= v

    svr.step_index = t
    svr.mean_phi, svr.mean_psi = mean_p, mean_q
    state.epoch += 1
    if not (np.isfinite(phi).all() and np.isfinite(psi).all()):
        state.diverged = True
    return state


# ---------------------------------------------------------------------------
# orchestration
# ---------------------------------------------------------------------------


def _check_dims(mu_s: DiscreteMeasure, mu_t: DiscreteMeasure, oracle: CostOracle) -> None:
    if mu_s.n_points != oracle.n_source or mu_t.n_points != oracle.n_target:
        raise InvalidInput(
            f"measures are {mu_s.n_points}/{mu_t.n_points} points but the "
            f"oracle is {oracle.n_source}x{oracle.n_target}"
        )


def _relative_gap(primal: float, dual: float) -> float:
    gap = (primal - dual) / max(primal, 1e-30)
    if -1e-9 <= gap < 0.0:
        return 0.0
    return gap


@dataclass(frozen=True, eq=False)
class _Checkpoint:
    plan: TransportPlan
    potentials: DualPotentials
    primal: float
    dual: float
    gap: float
    certified: bool


def _sweep_ascent(phi: np.ndarray, psi: np.ndarray, dual: float,
                  mu_s: DiscreteMeasure, mu_t: DiscreteMeasure,
                  oracle: CostOracle, tiny: float) -> tuple[np.ndarray, np.ndarray, float]:
    """Alternate the two one-sided transforms until the dual value stalls.

    Each half-sweep is itself a feasibility projection that never lowers the
    dual value, so the loop is a monotone ascent to a fixed point of the
    transform pair (usually reached within one or two rounds).
    """
    for _ in range(20):
        phi_next = _ctransform_phi(psi, oracle)
        psi_next = _ctransform_psi(phi_next, oracle)
        cand = float(phi_next @ mu_s.masses + psi_next @ mu_t.masses)
        if not cand > dual + tiny:
            break
        phi, psi, dual = phi_next, psi_next, cand
    return phi, psi, dual


def _nearest_arcs(oracle: CostOracle, k: int) -> set[tuple[int, int]]:
    """The k cheapest arcs out of every source and into every target.

    Geometry-driven completion: these arcs give thin supports routing
    slack at near-optimal cost, so unlike a structural completion tree
    they rarely drag expensive arcs into the restricted basis.
    """
    ns, nt = oracle.n_source, oracle.n_target
    k_row = min(k, nt)
    k_col = min(k, ns)
    arcs: set[tuple[int, int]] = set()
    for lo, hi in _row_chunks(ns, nt):
        block = oracle.row_block(lo, hi)
        cols = np.argpartition(block, k_row - 1, axis=1)[:, :k_row]
        for r, row_cols in enumerate(cols, start=lo):
            arcs.update((r, int(j)) for j in row_cols)
    # column side, swapping roles via the same row-block sweeps
    best = np.full((k_col, nt), np.inf)
    best_i = np.zeros((k_col, nt), dtype=np.int64)
    for lo, hi in _row_chunks(ns, nt):
        block = oracle.row_block(lo, hi)
        stack = np.vstack([best, block])
        ids = np.vstack([best_i, np.broadcast_to(
            np.arange(lo, hi)[:, None], (hi - lo, nt))])
        order = np.argsort(stack, axis=0, kind="stable")[:k_col]
        best = np.take_along_axis(stack, order, axis=0)
        best_i = np.take_along_axis(ids, order, axis=0)
    for row in best_i:
        arcs.update((int(i), j) for j, i in enumerate(row))
    return arcs


def _forest_flows(pairs: list[tuple[int, int]], ms: np.ndarray,
                  mt: np.ndarray, cost: np.ndarray) -> np.ndarray | None:
    """Feasible per-arc flows read straight off the support graph, or None.

    Degree-one elimination pins every arc of a forest in one pass, giving
    the unique conservative flow.  When a cyclic core survives (near-tight
    duplicate points do this), the remaining mass is drained greedily along
    the cheapest core arcs instead of giving up.  A non-None result is
    feasible, conservative and nonnegative, but never a claim of
    optimality: the caller's gap check decides whether it certifies, and it
    does so without ever building a simplex.  None means the support
    cannot carry the marginals on these arcs, or the greedy drain left
    mass stranded; those cases need the real solver.
    """
    ns = ms.size
    npts = ns + mt.size
    bal = np.concatenate([ms, -mt])
    deg = np.zeros(npts, dtype=np.int64)
    incident: list[list[int]] = [[] for _ in range(npts)]
    for k, (i, j) in enumerate(pairs):
        deg[i] += 1
        deg[ns + j] += 1
        incident[i].append(k)
        incident[ns + j].append(k)
    done = np.zeros(len(pairs), dtype=bool)
    flow = np.zeros(len(pairs))
    ptr = np.zeros(npts, dtype=np.int64)
    queue = [int(v) for v in np.flatnonzero(deg == 1)]
    while queue:
        node = queue.pop()
        if deg[node] != 1:
            continue
        arcs = incident[node]
        while done[arcs[ptr[node]]]:
            ptr[node] += 1
        k = arcs[ptr[node]]
        i, j = pairs[k]
        other = ns + j if node == i else i
        flow[k] = bal[node] if node == i else -bal[node]
        bal[other] += bal[node]
        bal[node] = 0.0
        done[k] = True
        deg[node] -= 1
        deg[other] -= 1
        if deg[other] == 1:
            queue.append(int(other))
    live = np.flatnonzero(~done)
    if live.size:
        for k in live[np.argsort(cost[live], kind="stable")]:
            i, j = pairs[k]
            f = min(float(bal[i]), float(-bal[ns + j]))
            if f > 0.0:
                flow[k] = f
                bal[i] -= f
                bal[ns + j] += f
    if float(np.abs(bal).max()) > 1e-12 or float(flow.min(initial=0.0)) < -1e-12:
        return None
    return np.maximum(flow, 0.0)


def _completion_arcs(mu_s: DiscreteMeasure, mu_t: DiscreteMeasure) -> set[tuple[int, int]]:
    """A tree of arcs that carries the marginals by construction.

    Northwest-corner sweep taken in lexicographic point order rather than
    index order, so consecutive arcs join geometrically close points and
    the tree sits in a restricted basis without dragging in wildly
    expensive arcs that would distort the recovered potentials.  Unioning
    these arcs into any extracted support makes the restricted problem
    feasible, so a thin support costs optimality at worst, never a dead
    checkpoint.
    """
    order_s = np.lexsort(mu_s.cloud.points.T[::-1])
    order_t = np.lexsort(mu_t.cloud.points.T[::-1])
    ms, mt = mu_s.masses, mu_t.masses
    ns, nt = ms.size, mt.size
    arcs: set[tuple[int, int]] = set()
    i = j = 0
    rs, rd = float(ms[order_s[0]]), float(mt[order_t[0]])
    while True:
        arcs.add((int(order_s[i]), int(order_t[j])))
        if rs <= rd:
            i += 1
            if i == ns:
                break
            rd -= rs
            rs = float(ms[order_s[i]])
        else:
            j += 1
            if j == nt:
                break
            rs -= rd
            rd = float(mt[order_t[j]])
    return arcs


_CERT_GAP = 1e-9  # relative duality gap below which a checkpoint is a proof
_RESCUE_EAGER_ENTRIES = 1 << 12  # grids this small may settle exactly mid-run
_RESCUE_FINAL_ENTRIES = 1 << 16  # at the last checkpoint the dense fallback stretches


def _attempt_support(state: SolverState, mu_s: DiscreteMeasure,
                     mu_t: DiscreteMeasure, oracle: CostOracle,
                     final: bool, gap_tol: float) -> _Checkpoint | None:
    """Restore feasibility, recover a support, solve it, certify it.

    The checkpoint pipeline.  The potentials are first projected feasible
    and tightened by alternating transforms, a monotone warm start for the
    ladder.  Then, along the slack-threshold ladder: extract the near-tight
    support, widen it with cached completion arcs (per-point cheapest arcs
    plus a sorted northwest tree) so it can always carry the marginals,
    solve the restricted problem exactly, and re-project the restricted
    basis potentials.  Each restricted solve warm-starts from the latest
    basis tree, so successive rungs, and later checkpoints within a run,
    pay only for re-optimization.  The projected pair is feasible by
    construction, so
    when its dual value matches the restricted cost the plan is provably
    optimal and the run ends; a match within ``gap_tol`` ends the run with
    that honest gap.
    Short of either, arcs the restricted potentials violate are priced
    into the next rung (delayed column generation) and the projected
    potentials are adopted whenever they improve the dual value; a rung
    that achieves neither doubles the threshold (at most 20 doublings,
    the same ladder that handles an infeasible support).  Small grids
    that exhaust the ladder uncertified are settled by one full-grid
    exact solve; large ones return the best checkpoint with its honest
    gap.

    Returns None when no rung produced a feasible restricted solution and
    the run may continue.  Adopted potentials are written back into the
    state, so later epochs resume from the strongest pair seen.
    """
    tiny = 1e-14 * max(1.0, state.cost_scale)
    cert_gap = min(_CERT_GAP, gap_tol)
    ms, mt = mu_s.masses, mu_t.masses
    phi = state.phi.copy()
    psi = _ctransform_psi(phi, oracle)
    dual = float(phi @ ms + psi @ mt)
    phi, psi, dual = _sweep_ascent(phi, psi, dual, mu_s, mu_t, oracle, tiny)
    state.phi[:], state.psi[:] = phi, psi
    arc_budget = max(1024, 4 * (oracle.n_source + oracle.n_target))

    def aux() -> set[tuple[int, int]]:
        """Completion arcs, built once per run and cached on the state."""
        if state.aux_arcs is None:
            state.aux_arcs = (_nearest_arcs(oracle, 2)
                              | _completion_arcs(mu_s, mu_t))
        return state.aux_arcs

    def settle(plan: TransportPlan, primal: float, phi_c: np.ndarray,
               psi_c: np.ndarray, dual_c: float, gap_c: float) -> _Checkpoint:
        state.phi[:], state.psi[:] = phi_c, psi_c
        state.note_bytes(plan.state_bytes())
        return _Checkpoint(plan, DualPotentials(phi_c, psi_c),
                           primal, dual_c, gap_c, gap_c <= cert_gap)

    def certify(plan: TransportPlan, primal: float, phi_c: np.ndarray,
                psi_c: np.ndarray, dual_c: float) -> _Checkpoint | None:
        gap_c = _relative_gap(primal, dual_c)
        if 0.0 <= gap_c <= gap_tol:
            return settle(plan, primal, phi_c, psi_c, dual_c, gap_c)
        return None

    def attempt(pairs, tree) -> object | None:
        """Restricted solve that treats a blown pivot budget as no answer."""
        try:
            return solve_restricted(mu_s, mu_t, oracle, sorted(pairs),
                                    ensure_feasible=True, start_pairs=tree)
        except RuntimeError:
            return None

    best = None
    priced: set[tuple[int, int]] = set()
    eps = state.eps_base
    tree = state.basis_pairs
    widen = False
    for _ in range(21):
        pots = DualPotentials(phi.copy(), psi.copy())
        try:
            support = extract_support(pots, oracle, eps)
        except SupportEmpty:
            eps *= 2.0
            continue
        if len(support) > arc_budget:
            break
        arr = np.asarray(support, dtype=np.int64)
        cost_sup = oracle.gather(arr[:, 0], arr[:, 1])
        flows = _forest_flows(support, ms, mt, cost_sup)
        if flows is not None:
            # the support is its own plan; certify against the swept pair
            keep = np.flatnonzero(flows > 0.0)
            plan = TransportPlan(oracle.n_source, oracle.n_target,
                                 arr[keep, 0], arr[keep, 1], flows[keep])
            hit = certify(plan, float(cost_sup @ flows),
                          phi.copy(), psi.copy(), dual)
            if hit is not None:
                return hit
        work = set(support) | priced
        if widen:
            work |= aux()
        widen = True  # the tight support alone gets exactly one shot
        restricted = attempt(work, tree)
        if restricted is Infeasible or restricted is None:
            tree = None
            eps *= 2.0
            continue
        tree = [(int(a), int(b)) for a, b in restricted.basis]
        state.basis_pairs = tree
        phi_r = restricted.phi.copy()
        psi_r = _ctransform_psi(phi_r, oracle)
        dual_r = float(phi_r @ ms + psi_r @ mt)
        hit = certify(restricted.plan, restricted.objective,
                      phi_r, psi_r, dual_r)
        if hit is None and dual > dual_r:
            # projecting the basis potentials can lose more dual value
            # than the restriction gained; the incumbent pair may still
            # prove this plan optimal
            hit = certify(restricted.plan, restricted.objective,
                          phi.copy(), psi.copy(), dual)
        if hit is not None:
            return hit
        if best is None or restricted.objective < best.objective:
            best = restricted
        # a violation below half the certifiable gap cannot block the
        # certificate, so arcs that small are not worth carrying
        price_tol = max(tiny, 0.5 * gap_tol * abs(restricted.objective))
        fresh = set(_priced_rows(restricted.phi, restricted.psi, oracle,
                                 price_tol))
        improved = not fresh <= priced
        priced |= fresh
        if dual_r > dual + tiny:
            phi, psi, dual = phi_r, psi_r, dual_r
            improved = True
        if not improved:
            eps *= 2.0

    grid = oracle.n_source * oracle.n_target
    if (not state.dense_rescue_spent
            and (grid <= _RESCUE_EAGER_ENTRIES
                 or (final and grid <= _RESCUE_FINAL_ENTRIES))):
        # last resort: the grid is small enough to settle exactly, once
        state.dense_rescue_spent = True
        try:
            full = solve_exact(mu_s, mu_t, oracle)
        except RuntimeError:
            full = None
        if full is not None:
            phi_f = full.phi.copy()
            psi_f = _ctransform_psi(phi_f, oracle)
            dual_f = float(phi_f @ ms + psi_f @ mt)
            hit = certify(full.plan, full.objective, phi_f, psi_f, dual_f)
            if hit is None and dual > dual_f:
                hit = certify(full.plan, full.objective,
                              phi.copy(), psi.copy(), dual)
            if hit is not None:
                return hit
            if best is None or full.objective < best.objective:
                best = full

    if best is None:
        if final:
            raise CapacityError(
                "support recovery exhausted 20 slack doublings without feasibility"
            )
        return None

    state.phi[:], state.psi[:] = phi, psi
    state.note_bytes(best.plan.state_bytes())
    return _Checkpoint(best.plan, DualPotentials(phi.copy(), psi.copy()),
                       best.objective, dual,
                       _relative_gap(best.objective, dual), False)


def solve(mu_s: DiscreteMeasure, mu_t: DiscreteMeasure, oracle: CostOracle,
          cfg: SolverConfig | None = None) -> OTSolution:
    """Run the stochastic dual iteration until the gap closes.

    Every ``ctransform_period`` epochs the target potentials are reset to
    the c-transform of the source ones, restoring feasibility.  On the same
    cadence the full support-recovery checkpoint runs: extraction along the
    threshold ladder, a restricted exact solve, and an optimality
    certificate from the re-projected basis potentials (see
    ``_attempt_support``).  Recovery attempts that fail to finish the run
    back off exponentially, up to 32 periods apart, so hard instances spend
    their time in the stochastic pass; the final epoch always attempts.
    Returns at the first checkpoint whose relative gap is within tolerance;
    at ``max_epochs`` the best checkpoint seen is returned with its honest
    gap.
    """
    cfg = SolverConfig() if cfg is None else cfg
    _check_dims(mu_s, mu_t, oracle)
    state = init_state(mu_s, mu_t, oracle, cfg)
    best: _Checkpoint | None = None
    best_epoch = 0
    misses = 0
    attempt_after = 0

    for epoch in range(1, cfg.max_epochs + 1):
        sgd_epoch(state, mu_s, mu_t, oracle, cfg)
        if state.diverged:
            raise Diverged(f"non-finite potentials after epoch {epoch}")
        final = epoch == cfg.max_epochs
        if epoch % cfg.ctransform_period and not final:
            continue
        if epoch < attempt_after and not final:
            # keep the cheap feasibility restoration on cadence, but let the
            # stochastic pass run several periods between failed recoveries
            state.psi[:] = _ctransform_psi(state.phi, oracle)
            continue
        checkpoint = _attempt_support(state, mu_s, mu_t, oracle, final,
                                      cfg.gap_tolerance_rel)
        if checkpoint is not None and (best is None or checkpoint.gap < best.gap):
            best, best_epoch = checkpoint, epoch
        if checkpoint is not None and (checkpoint.certified
                                       or checkpoint.gap <= cfg.gap_tolerance_rel):
            best, best_epoch = checkpoint, epoch
            break
        # this attempt did not end the run, so it was expensive noise;
        # space the next one out and let the stochastic pass catch up
        misses = min(misses + 1, 5)
        attempt_after = epoch + cfg.ctransform_period * (1 << misses)

    if best is None:  # pragma: no cover - every run ends with a final attempt
        raise CapacityError("no feasible support was ever recovered")
    state.note_bytes(best.plan.state_bytes())
    return OTSolution(
        plan=best.plan,
        potentials=best.potentials,
        primal_cost=best.primal,
        dual_value=best.dual,
        relative_gap=best.gap,
        epochs_used=best_epoch,
        peak_state_bytes=state.peak_state_bytes,
    )


# ---------------------------------------------------------------------------
# interchange
# ---------------------------------------------------------------------------


def solution_to_json(sol: OTSolution) -> str:
    """Solution JSON: the plan fields plus solver metrics, one flat object."""
    entries = [
        [int(a), int(b), float(m)]
        for a, b, m in zip(sol.plan.i, sol.plan.j, sol.plan.mass)
    ]
    return json.dumps({
        "n_source": sol.plan.n_source,
        "n_target": sol.plan.n_target,
        "entries": entries,
        "primal_cost": sol.primal_cost,
        "dual_value": sol.dual_value,
        "relative_gap": sol.relative_gap,
        "epochs": sol.epochs_used,
        "peak_state_bytes": sol.peak_state_bytes,
    })


_CONFIG_FIELDS = {
    "max_epochs": int,
    "base_step": float,
    "step_decay": str,
    "support_tolerance_rel": float,
    "gap_tolerance_rel": float,
    "ctransform_period": int,
    "seed": int,
}


def parse_solver_config(path: str) -> SolverConfig:
    """Flat key=value config file; unknown keys are errors, '#' comments."""
    values: dict = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidInput(f"{path}: line {lineno}: expected key=value")
            key, _, val = line.partition("=")
            key, val = key.strip(), val.strip()
            if key not in _CONFIG_FIELDS:
                raise InvalidInput(f"{path}: line {lineno}: unknown key {key!r}")
            try:
                if key == "step_decay":
                    values[key] = StepDecay(val)
                elif key == "base_step" and val.lower() in ("auto", "none"):
                    values[key] = None
                else:
                    values[key] = _CONFIG_FIELDS[key](val)
            except ValueError as exc:
                raise InvalidInput(f"{path}: line {lineno}: {exc}") from None
    try:
        return SolverConfig(**values)
    except TypeError as exc:
        raise InvalidInput(f"{path}: {exc}") from None
