"""Exact transportation solver: primal network simplex on a bipartite graph.

Ground truth at small scale, and the restricted-primal engine behind the
sparse solver.  Solutions are vertex (spanning-tree) solutions, so the
``n_entries <= n_s + n_t - 1`` bound and the dual potentials fall out of
the final basis.

Pivoting is deterministic: the entering arc is the most negative reduced
cost with ties broken by lowest (i, j); the leaving arc is the last
blocking arc along the pivot cycle from its apex.  The latter is the
strongly-feasible-tree rule, which rules out cycling on degenerate
instances.  Pivots run on index-nudged marginals that break mass ties
(see ``_perturbed``) so repeated masses cannot stall progress, while
output flows always come from the true marginals.  Artificial arcs
through a root node make any arc subset solvable with one code path and
turn infeasibility into leftover artificial flow; when feasibility is
known in advance the simplex instead starts from a northwest-corner
spanning tree and the artificial phase disappears.

Potentials are tracked as ``pi = pi_rest + BIG * pi_big`` with an integer
big-M coefficient, so reduced costs of real arcs never suffer big-M
cancellation error.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, InvalidInput
from .measures import CostOracle, DiscreteMeasure, TransportPlan, plan_cost

# Above this many cost entries the dense oracle refuses to run.
DENSE_CAP_ENTRIES = 10**6

# Artificial flow above this marks the support as unable to carry the
# marginals (inputs are normalized to exact balance first, so genuine
# numerical residue sits many orders below).
_FEAS_TOL = 1e-11


def _perturbed(masses: np.ndarray) -> np.ndarray:
    """Index-graded nudge that breaks mass ties, renormalized to sum 1.

    Uniform and repeated masses make almost every pivot degenerate and the
    simplex can then treadmill on zero-progress pivots.  Pivoting on nudged
    marginals keeps basic flows distinct, while the returned plan is still
    exact: the final tree is refilled from the true marginals, and a basis
    that prices out optimal and refills nonnegative is optimal for the true
    problem regardless of the nudge.
    """
    n = masses.size
    nudged = masses + np.arange(1, n + 1) * (1e-12 / n)
    return nudged / nudged.sum()


def _nw_tree_pairs(supplies: np.ndarray, demands: np.ndarray) -> list[tuple[int, int]]:
    """Northwest-corner spanning tree on the perturbed marginals.

    The staircase of index pairs visited by the classic sweep: exactly
    ``ns + nt - 1`` distinct arcs that carry the marginals with
    nonnegative flow by construction, which makes them a valid simplex
    starting basis for any arc set that contains them.
    """
    sp, dp = _perturbed(supplies), _perturbed(demands)
    ns, nt = sp.size, dp.size
    pairs: list[tuple[int, int]] = []
    i = j = 0
    rs, rd = float(sp[0]), float(dp[0])
    while True:
        pairs.append((i, j))
        if rs <= rd:
            i += 1
            if i == ns:
                break
            rd -= rs
            rs = float(sp[i])
        else:
            j += 1
            if j == nt:
                break
            rs -= rd
            rd = float(dp[j])
    return pairs


def _spans(pairs: list[tuple[int, int]], ns: int, nt: int) -> bool:
    """Do these (i, j) arcs form a spanning tree of the bipartite nodes?"""
    if len(pairs) != ns + nt - 1:
        return False
    parent = list(range(ns + nt))

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in pairs:
        a, b = find(i), find(ns + j)
        if a == b:
            return False
        parent[a] = b
    return True


class _InfeasibleType:
    """Singleton sentinel: the restricted support cannot carry the marginals."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Infeasible"


Infeasible = _InfeasibleType()


def dense_gamma_bytes(n_source: int, n_target: int) -> int:
    """Bytes a dense float64 coupling matrix would occupy."""
    if n_source < 1 or n_target < 1:
        raise InvalidInput("dimensions must be >= 1")
    return int(n_source) * int(n_target) * 8


@dataclass(frozen=True, eq=False)
class ExactSolution:
    """A vertex solution with its optimality certificate.

    ``phi``/``psi`` are dual potentials recovered from the final basis:
    feasible (phi_i + psi_j <= C_ij) with equality on the support, and
    their dual value matches ``objective`` by strong duality.  ``basis``
    holds the basic arcs as (i, j) rows; when they span the positive-mass
    points they can seed a later solve over a nearby arc set.
    """

    plan: TransportPlan
    objective: float
    is_basic: bool
    phi: np.ndarray
    psi: np.ndarray
    state_bytes: int
    basis: np.ndarray | None = None


class _Simplex:
    """Network simplex over real arcs (i, j) plus one artificial arc per node.

    Nodes: sources 0..ns-1, targets ns..ns+nt-1, root ns+nt.  All real arcs
    run source -> target; artificial arcs run source -> root and
    root -> target, so the all-artificial star is a feasible starting tree
    whenever supplies and demands are positive.
    """

    def __init__(self, ns: int, nt: int, supplies: np.ndarray, demands: np.ndarray,
                 arc_i: np.ndarray, arc_j: np.ndarray, arc_cost: np.ndarray,
                 start_tree: np.ndarray | None = None) -> None:
        self.ns, self.nt = ns, nt
        self.root = ns + nt
        n_nodes = ns + nt + 1
        m = arc_i.size
        self.m = m
        cmax = float(arc_cost.max()) if m else 0.0
        self.big = 3.0 * (cmax + 1.0) * (ns + nt)
        self.enter_tol = 1e-11 * (1.0 + cmax)

        self.a_src = np.concatenate([
            arc_i.astype(np.int32),
            np.arange(ns, dtype=np.int32),
            np.full(nt, self.root, dtype=np.int32),
        ])
        self.a_dst = np.concatenate([
            (ns + arc_j).astype(np.int32),
            np.full(ns, self.root, dtype=np.int32),
            np.arange(ns, ns + nt, dtype=np.int32),
        ])
        # big-M cost lives entirely in the integer coefficient
        self.a_cost = np.concatenate([arc_cost.astype(np.float64), np.zeros(ns + nt)])
        self.a_big = np.concatenate([
            np.zeros(m, dtype=np.int32), np.ones(ns + nt, dtype=np.int32),
        ])

        self.flow = np.zeros(m + ns + nt)
        self.in_tree = np.zeros(m + ns + nt, dtype=bool)
        self.parent = np.full(n_nodes, -1, dtype=np.int32)
        self.parent_arc = np.full(n_nodes, -1, dtype=np.int32)
        self.depth = np.zeros(n_nodes, dtype=np.int32)
        self.children: list[list[int]] = [[] for _ in range(n_nodes)]
        self.pi_rest = np.zeros(n_nodes)
        self.pi_big = np.zeros(n_nodes, dtype=np.int32)

        if start_tree is None:
            self.flow[m:m + ns] = _perturbed(supplies)
            self.flow[m + ns:] = _perturbed(demands)
            self.in_tree[m:] = True
            self.parent[:self.root] = self.root
            self.parent_arc[:ns] = m + np.arange(ns)
            self.parent_arc[ns:self.root] = m + ns + np.arange(nt)
            self.depth[:self.root] = 1
            self.children[self.root] = list(range(self.root))
            self.pi_big[:ns] = 1
            self.pi_big[ns:self.root] = -1
        else:
            self._seed_tree(np.asarray(start_tree, dtype=np.int64),
                            _perturbed(supplies), _perturbed(demands))

        self._red = np.empty(m + ns + nt)
        self.state_bytes = sum(a.nbytes for a in (
            self.a_src, self.a_dst, self.a_cost, self.a_big, self.flow,
            self.in_tree, self.parent, self.parent_arc, self.depth,
            self.pi_rest, self.pi_big, self._red,
        ))
        self.pivots = 0
        self.max_pivots = 2000 + 100 * (ns + nt) + 4 * m

    def _seed_tree(self, tree_arcs: np.ndarray, supplies: np.ndarray,
                   demands: np.ndarray) -> None:
        """Adopt a caller-provided spanning tree of real arcs as the basis.

        The root stays attached through the first source's artificial arc,
        which carries only the net marginal imbalance (zero up to roundoff),
        so the basis is feasible from the start and the whole artificial
        phase of the big-M construction is skipped.
        """
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.root)]
        for a in tree_arcs:
            a = int(a)
            adj[int(self.a_src[a])].append((int(self.a_dst[a]), a))
            adj[int(self.a_dst[a])].append((int(self.a_src[a]), a))
        self.in_tree[tree_arcs] = True
        self.in_tree[self.m] = True
        self.parent[0] = self.root
        self.parent_arc[0] = self.m
        self.depth[0] = 1
        self.children[self.root] = [0]
        order = [0]
        seen = np.zeros(self.root, dtype=bool)
        seen[0] = True
        qi = 0
        while qi < len(order):
            node = order[qi]
            qi += 1
            for nxt, a in adj[node]:
                if seen[nxt]:
                    continue
                seen[nxt] = True
                self.parent[nxt] = node
                self.parent_arc[nxt] = a
                self.depth[nxt] = self.depth[node] + 1
                self.children[node].append(nxt)
                order.append(nxt)
        if len(order) != self.root:
            raise RuntimeError("start tree does not span the bipartite nodes")
        balance = np.concatenate([supplies, -demands])
        for node in reversed(order[1:]):  # children resolve before parents
            a = int(self.parent_arc[node])
            f = float(balance[node])
            self.flow[a] = f if int(self.a_src[a]) == node else -f
            balance[self.parent[node]] += f
        self.flow[self.m] = float(balance[0])
        np.maximum(self.flow, 0.0, out=self.flow)

    # -- potentials ---------------------------------------------------------

    def _refresh_potentials(self) -> None:
        """Recompute potentials and depths exactly from the tree."""
        self.pi_rest[self.root] = 0.0
        self.pi_big[self.root] = 0
        self.depth[self.root] = 0
        stack = list(self.children[self.root])
        while stack:
            node = stack.pop()
            p = self.parent[node]
            a = self.parent_arc[node]
            self.depth[node] = self.depth[p] + 1
            if self.a_src[a] == node:  # arc node -> p: c - pi[node] + pi[p] = 0
                self.pi_rest[node] = self.a_cost[a] + self.pi_rest[p]
                self.pi_big[node] = self.a_big[a] + self.pi_big[p]
            else:                      # arc p -> node
                self.pi_rest[node] = self.pi_rest[p] - self.a_cost[a]
                self.pi_big[node] = self.pi_big[p] - self.a_big[a]
            stack.extend(self.children[node])

    def _reduced_costs(self) -> np.ndarray:
        red = self._red
        np.subtract(self.a_cost, self.pi_rest[self.a_src], out=red)
        red += self.pi_rest[self.a_dst]
        red_big = self.a_big - self.pi_big[self.a_src] + self.pi_big[self.a_dst]
        red += self.big * red_big
        red[self.in_tree] = np.inf
        # artificials never re-enter once out; only real arcs are candidates
        red[self.m:] = np.inf
        return red

    # -- pivoting -----------------------------------------------------------

    def _cycle(self, u: int, v: int) -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
        """Tree paths (arc, child-node) from u and from v up to their join."""
        path_u: list[tuple[int, int]] = []
        path_v: list[tuple[int, int]] = []
        fu, fv = u, v
        while self.depth[fu] > self.depth[fv]:
            path_u.append((self.parent_arc[fu], fu)); fu = self.parent[fu]
        while self.depth[fv] > self.depth[fu]:
            path_v.append((self.parent_arc[fv], fv)); fv = self.parent[fv]
        while fu != fv:
            path_u.append((self.parent_arc[fu], fu)); fu = self.parent[fu]
            path_v.append((self.parent_arc[fv], fv)); fv = self.parent[fv]
        return path_u, path_v

    def _pivot(self, e: int, forced_leaving: int = -1) -> None:
        """Bring arc e into the tree; standard leaving rule unless forced."""
        self.pivots += 1
        if self.pivots > self.max_pivots:
            raise RuntimeError("network simplex exceeded its pivot budget")
        u, v = int(self.a_src[e]), int(self.a_dst[e])
        path_u, path_v = self._cycle(u, v)

        # Orientation: apex -> u, across e (u -> v), v -> apex.  An arc gains
        # flow when it points along that orientation.  Walking up from u the
        # cycle runs parent -> child, so "gains" means a_dst == child; walking
        # up from v it runs child -> parent, so "gains" means a_src == child.
        cycle: list[tuple[int, int, bool]] = []       # (arc, child, gains)
        for a, c in reversed(path_u):
            cycle.append((a, c, int(self.a_dst[a]) == c))
        cycle.append((e, -1, True))
        for a, c in path_v:
            cycle.append((a, c, int(self.a_src[a]) == c))

        if forced_leaving >= 0:
            # degenerate swap: the victim carries only tolerance-level flow
            theta = 0.0
            leaving, leaving_child = forced_leaving, -1
            for a, c, gains in cycle:
                if a == forced_leaving:
                    leaving_child = c
        else:
            theta = np.inf
            leaving, leaving_child = -1, -1
            for a, c, gains in cycle:
                if not gains and self.flow[a] <= theta:
                    # last blocking arc along the orientation (<=, not <)
                    theta, leaving, leaving_child = float(self.flow[a]), a, c
        if leaving < 0:
            raise RuntimeError("unbounded pivot cycle")

        if theta != 0.0:
            for a, c, gains in cycle:
                self.flow[a] = self.flow[a] + theta if gains else self.flow[a] - theta
        self.flow[e] = theta
        self.flow[leaving] = 0.0
        np.maximum(self.flow, 0.0, out=self.flow)  # clear -0.0 / roundoff

        # Which endpoint of e hangs below the leaving arc?
        w = u if any(a == leaving for a, _ in path_u) else v
        red_e = (self.a_cost[e] - self.pi_rest[u] + self.pi_rest[v]
                 + self.big * float(self.a_big[e] - self.pi_big[u] + self.pi_big[v]))
        delta = red_e if w == u else -red_e

        self.in_tree[leaving] = False
        self.in_tree[e] = True
        self.children[self.parent[leaving_child]].remove(leaving_child)

        # Re-hang the detached component at w by reversing parents w..leaving_child.
        prev_node, prev_arc = (v, e) if w == u else (u, e)
        node = w
        while True:
            nxt_parent = int(self.parent[node])
            nxt_arc = int(self.parent_arc[node])
            if node != leaving_child:
                self.children[nxt_parent].remove(node)
            self.parent[node] = prev_node
            self.parent_arc[node] = prev_arc
            self.children[prev_node].append(node)
            if node == leaving_child:
                break
            prev_node, prev_arc, node = node, nxt_arc, nxt_parent

        # Constant potential shift on the re-hung component, exact in pi_big.
        dbig = int(self.a_big[e] - self.pi_big[u] + self.pi_big[v])
        dbig = dbig if w == u else -dbig
        stack = [w]
        while stack:
            nd = stack.pop()
            self.pi_rest[nd] += delta
            self.pi_big[nd] += dbig
            self.depth[nd] = self.depth[self.parent[nd]] + 1
            stack.extend(self.children[nd])

    def _optimize(self) -> None:
        while True:
            self._refresh_potentials()
            red = self._reduced_costs()
            e = int(np.argmin(red))
            if red[e] >= -self.enter_tol:
                return
            burst = 0
            while red[e] < -self.enter_tol:
                self._pivot(e)
                burst += 1
                if burst >= 512:
                    break  # refresh potentials against drift
                red = self._reduced_costs()
                e = int(np.argmin(red))

    # -- artificial cleanup --------------------------------------------------

    def _subtree_mask(self, top: int) -> np.ndarray:
        mask = np.zeros(self.ns + self.nt + 1, dtype=bool)
        stack = [top]
        while stack:
            nd = stack.pop()
            mask[nd] = True
            stack.extend(self.children[nd])
        return mask

    def _merge_artificials(self) -> bool:
        """Swap one zero-flow artificial for a real crossing arc, if any.

        Keeps the basis connected through real arcs wherever the instance
        allows, which keeps the recovered potentials free of big-M offsets
        across components.
        """
        art = np.flatnonzero(self.in_tree[self.m:]) + self.m
        if art.size <= 1:
            return False
        for victim in art[1:]:
            if self.flow[victim] > _FEAS_TOL:
                continue
            a, b = int(self.a_src[victim]), int(self.a_dst[victim])
            # child endpoint of the victim arc roots the detached component
            top = a if self.parent_arc[a] == victim else b
            mask = self._subtree_mask(top)
            cross = np.flatnonzero(
                mask[self.a_src[:self.m]] != mask[self.a_dst[:self.m]]
            )
            cross = cross[~self.in_tree[cross]]
            if cross.size == 0:
                continue
            self._pivot(int(cross[0]), forced_leaving=int(victim))
            return True
        return False

    def run(self) -> None:
        self._optimize()
        while self._merge_artificials():
            self._optimize()
        self._refresh_potentials()

    # -- output --------------------------------------------------------------

    def strip_flows(self, supplies: np.ndarray, demands: np.ndarray) -> np.ndarray:
        """Exact per-arc flows for the final tree under the given marginals.

        Resolves the conservation equations leaf-first (children before
        parents), which satisfies every node balance to roundoff and strips
        any drift the pivot arithmetic accumulated.
        """
        n_nodes = self.ns + self.nt + 1
        resid = np.zeros(n_nodes)
        resid[:self.ns] = supplies
        resid[self.ns:self.root] = -demands
        order = np.argsort(self.depth, kind="stable")[::-1]
        flow = np.zeros_like(self.flow)
        for node in order:
            node = int(node)
            if node == self.root:
                continue
            a = int(self.parent_arc[node])
            p = int(self.parent[node])
            if self.a_src[a] == node:
                f = resid[node]
                resid[p] += f
            else:
                f = -resid[node]
                resid[p] -= f
            flow[a] = f
        return flow


def _active(measure: DiscreteMeasure) -> tuple[np.ndarray, np.ndarray]:
    idx = np.flatnonzero(measure.masses > 0.0)
    w = measure.masses[idx]
    return idx, w / w.sum()


def _recover_potentials(simplex: _Simplex, oracle: CostOracle,
                        s_idx: np.ndarray, t_idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Full-length potentials: basis values on active nodes, c-transform fill
    for zero-mass nodes, anchored so the first active source potential is 0."""
    ns_a = s_idx.size
    anchor = float(simplex.pi_rest[0])
    phi_a = simplex.pi_rest[:ns_a] - anchor
    psi_a = -(simplex.pi_rest[ns_a:simplex.root] - anchor)

    phi = np.empty(oracle.n_source)
    psi = np.empty(oracle.n_target)
    phi[s_idx] = phi_a
    psi[t_idx] = psi_a
    inactive_s = np.setdiff1d(np.arange(oracle.n_source), s_idx, assume_unique=False)
    inactive_t = np.setdiff1d(np.arange(oracle.n_target), t_idx, assume_unique=False)
    for i in inactive_s:
        row = oracle.block(np.array([i]), t_idx)[0]
        phi[i] = float(np.min(row - psi_a))
    if inactive_t.size:
        for j in inactive_t:
            col = oracle.block(np.arange(oracle.n_source), np.array([j]))[:, 0]
            psi[j] = float(np.min(col - phi))
    return phi, psi


def _finish(simplex: _Simplex, oracle: CostOracle, supplies: np.ndarray,
            demands: np.ndarray, s_idx: np.ndarray, t_idx: np.ndarray,
            arc_i: np.ndarray, arc_j: np.ndarray):
    """Shared tail of both solvers: exact flows, feasibility, solution."""
    flow = simplex.strip_flows(supplies, demands)
    art_flow = flow[simplex.m:]
    if art_flow.size and float(np.abs(art_flow).max()) > _FEAS_TOL:
        return None
    real = flow[:simplex.m]
    real[np.abs(real) <= 1e-15] = 0.0
    if float(real.min(initial=0.0)) < -1e-9:
        raise RuntimeError("negative basic flow after marginal restore")
    np.maximum(real, 0.0, out=real)
    keep = np.flatnonzero((real > 0.0) & simplex.in_tree[:simplex.m])
    plan = TransportPlan(
        n_source=oracle.n_source,
        n_target=oracle.n_target,
        i=s_idx[arc_i[keep]],
        j=t_idx[arc_j[keep]],
        mass=real[keep],
    )
    phi, psi = _recover_potentials(simplex, oracle, s_idx, t_idx)
    basic = np.flatnonzero(simplex.in_tree[:simplex.m])
    return ExactSolution(
        plan=plan,
        objective=plan_cost(plan, oracle),
        is_basic=True,
        phi=phi,
        psi=psi,
        state_bytes=simplex.state_bytes,
        basis=np.column_stack([s_idx[arc_i[basic]], t_idx[arc_j[basic]]]),
    )


def _check_shapes(mu_s: DiscreteMeasure, mu_t: DiscreteMeasure, oracle: CostOracle) -> None:
    if mu_s.n_points != oracle.n_source or mu_t.n_points != oracle.n_target:
        raise InvalidInput(
            f"measures are {mu_s.n_points}/{mu_t.n_points} points but the "
            f"oracle is {oracle.n_source}x{oracle.n_target}"
        )


def solve_exact(mu_s: DiscreteMeasure, mu_t: DiscreteMeasure, oracle: CostOracle,
                dense_cap: int = DENSE_CAP_ENTRIES) -> ExactSolution:
    """Optimal coupling over the full pair grid.

    Materializing all n_s * n_t costs is allowed here and capped by
    ``dense_cap``; the fast solver is the path that must stay sparse.
    """
    _check_shapes(mu_s, mu_t, oracle)
    n_entries = mu_s.n_points * mu_t.n_points
    if n_entries > dense_cap:
        raise CapacityError(
            f"full grid needs {n_entries} cost entries, above the cap {dense_cap}"
        )
    s_idx, supplies = _active(mu_s)
    t_idx, demands = _active(mu_t)
    ns_a, nt_a = s_idx.size, t_idx.size
    arc_i = np.repeat(np.arange(ns_a, dtype=np.int64), nt_a)
    arc_j = np.tile(np.arange(nt_a, dtype=np.int64), ns_a)
    cost = oracle.block(s_idx, t_idx).reshape(-1)
    start = np.array([i * nt_a + j for i, j in _nw_tree_pairs(supplies, demands)],
                     dtype=np.int64)
    simplex = _Simplex(ns_a, nt_a, supplies, demands, arc_i, arc_j, cost,
                       start_tree=start)
    simplex.run()
    solution = _finish(simplex, oracle, supplies, demands, s_idx, t_idx, arc_i, arc_j)
    if solution is None:
        raise RuntimeError("full-grid transportation reported infeasible")
    return solution


def solve_restricted(mu_s: DiscreteMeasure, mu_t: DiscreteMeasure, oracle: CostOracle,
                     support, dense_cap: int = DENSE_CAP_ENTRIES,
                     ensure_feasible: bool = False, start_pairs=None):
    """Optimal coupling restricted to the given support pairs.

    Returns ``Infeasible`` (the sentinel, not an exception) when the support
    cannot carry the marginals.  With ``ensure_feasible`` the support is
    silently widened by a northwest-corner tree, so the problem is always
    feasible and the simplex starts from that tree instead of the
    artificial basis; the plan may then use arcs outside ``support``.
    ``start_pairs`` warm-starts from a previous solution's ``basis`` when
    those arcs still span the positive-mass points, which makes a
    sequence of solves over drifting supports close to incremental.
    """
    _check_shapes(mu_s, mu_t, oracle)
    pairs = sorted(set((int(i), int(j)) for i, j in support))
    if not pairs:
        raise InvalidInput("restricted support is empty")
    if len(pairs) > dense_cap:
        raise CapacityError(
            f"restricted support has {len(pairs)} entries, above the cap {dense_cap}"
        )
    arr = np.asarray(pairs, dtype=np.int64)
    if (arr[:, 0] < 0).any() or (arr[:, 0] >= oracle.n_source).any():
        raise InvalidInput("support source index out of range")
    if (arr[:, 1] < 0).any() or (arr[:, 1] >= oracle.n_target).any():
        raise InvalidInput("support target index out of range")

    s_idx, supplies = _active(mu_s)
    t_idx, demands = _active(mu_t)
    # arcs touching zero-mass points can only carry zero; drop them
    s_pos = np.full(oracle.n_source, -1, dtype=np.int64)
    t_pos = np.full(oracle.n_target, -1, dtype=np.int64)
    s_pos[s_idx] = np.arange(s_idx.size)
    t_pos[t_idx] = np.arange(t_idx.size)
    arc_i = s_pos[arr[:, 0]]
    arc_j = t_pos[arr[:, 1]]
    live = (arc_i >= 0) & (arc_j >= 0)
    arc_i, arc_j = arc_i[live], arc_j[live]
    def seeded(tree_pairs: list[tuple[int, int]]) -> np.ndarray:
        nonlocal arc_i, arc_j
        pos = {pair: k for k, pair in enumerate(zip(arc_i.tolist(), arc_j.tolist()))}
        missing = [p for p in tree_pairs if p not in pos]
        for p in missing:
            pos[p] = len(pos)
        if missing:
            arc_i = np.concatenate(
                [arc_i, np.array([p[0] for p in missing], dtype=np.int64)])
            arc_j = np.concatenate(
                [arc_j, np.array([p[1] for p in missing], dtype=np.int64)])
        return np.array([pos[p] for p in tree_pairs], dtype=np.int64)

    start = None
    if start_pairs is not None:
        cand = [(int(s_pos[i]), int(t_pos[j])) for i, j in start_pairs]
        if (all(i >= 0 and j >= 0 for i, j in cand)
                and _spans(cand, s_idx.size, t_idx.size)):
            start = seeded(cand)
    if start is None and ensure_feasible:
        start = seeded(_nw_tree_pairs(supplies, demands))
    if start is None and arc_i.size == 0:
        return Infeasible
    cost = oracle.gather(s_idx[arc_i], t_idx[arc_j])
    simplex = _Simplex(s_idx.size, t_idx.size, supplies, demands, arc_i, arc_j, cost,
                       start_tree=start)
    simplex.run()
    solution = _finish(simplex, oracle, supplies, demands, s_idx, t_idx, arc_i, arc_j)
    return Infeasible if solution is None else solution
