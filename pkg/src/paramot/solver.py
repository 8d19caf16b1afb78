"""
Exact discrete Kantorovich solvers and brute-force oracles.

``solve_kantorovich`` is a transportation (network) simplex: northwest-corner
initial basis, Bland's rule for both the entering and the leaving cell. The
basis is always a spanning tree of the bipartite row/column graph, so
degenerate (zero-flow) basic cells are kept explicitly.

The oracles (``enumerate_vertices``, ``basic_solutions``) do not share any
code with the simplex and are meant for cross-checking it on small inputs.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .measures import Coupling, DiscreteMeasure, MultiCoupling

CELL_CAP = 10**6
VERTEX_CELL_GUARD = 36
DEDUP_TOL = 1e-9


class SolverError(RuntimeError):
    """Raised when a solver breaks its own contract (e.g. iteration cap hit)."""


@dataclass(frozen=True, eq=False)
class TransportResult:
    plan: Coupling
    value: float
    dual_u: np.ndarray
    dual_v: np.ndarray
    iterations: int = 0

    def duality_gap(self) -> float:
        mu, nu = self.plan.row_measure, self.plan.col_measure
        dual = math.fsum(self.dual_u * mu.weights) + math.fsum(self.dual_v * nu.weights)
        return abs(dual - self.value)


@dataclass(frozen=True, eq=False)
class PolytopeVertices:
    vertices: list

    def __len__(self):
        return len(self.vertices)

    def __iter__(self):
        return iter(self.vertices)

    def values(self, C: np.ndarray) -> np.ndarray:
        return np.array([v.cost(C) for v in self.vertices])


def _check_cost(C, m: int, n: int) -> np.ndarray:
    C = np.asarray(C, dtype=float)
    if C.shape != (m, n):
        raise ValueError(f"cost has shape {C.shape}, expected {(m, n)}")
    if not np.all(np.isfinite(C)):
        raise ValueError("cost must be finite")
    if np.any(C < 0):
        raise ValueError("cost must be nonnegative")
    return C


def _northwest_corner(a: np.ndarray, b: np.ndarray):
    m, n = a.size, b.size
    a, b = a.copy(), b.copy()
    flow = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        x = min(a[i], b[j])
        flow[i, j] = x
        basis.append((i, j))
        a[i] -= x
        b[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif a[i] <= b[j]:
            i += 1
        else:
            j += 1
    return flow, basis


class _Tree:
    """Spanning tree on nodes 0..m-1 (rows) and m..m+n-1 (columns)."""

    def __init__(self, m: int, n: int, cells):
        self.m, self.n = m, n
        self.adj = [set() for _ in range(m + n)]
        for i, j in cells:
            self.add(i, j)

    def add(self, i, j):
        self.adj[i].add(self.m + j)
        self.adj[self.m + j].add(i)

    def remove(self, i, j):
        self.adj[i].discard(self.m + j)
        self.adj[self.m + j].discard(i)

    def duals(self, C: np.ndarray):
        m = self.m
        u = np.zeros(m)
        v = np.zeros(self.n)
        seen = [False] * (m + self.n)
        seen[0] = True
        queue = deque([0])
        while queue:
            node = queue.popleft()
            for nb in sorted(self.adj[node]):
                if seen[nb]:
                    continue
                seen[nb] = True
                if node < m:
                    v[nb - m] = C[node, nb - m] - u[node]
                else:
                    u[nb] = C[nb, node - m] - v[node - m]
                queue.append(nb)
        if not all(seen):
            raise SolverError("basis is not a spanning tree")
        return u, v

    def path(self, start: int, goal: int) -> list[int]:
        prev = {start: None}
        queue = deque([start])
        while queue:
            node = queue.popleft()
            if node == goal:
                break
            for nb in self.adj[node]:
                if nb not in prev:
                    prev[nb] = node
                    queue.append(nb)
        out = [goal]
        while prev[out[-1]] is not None:
            out.append(prev[out[-1]])
        return out[::-1]


def _transport_simplex(a: np.ndarray, b: np.ndarray, C: np.ndarray):
    m, n = C.shape
    flow, basis = _northwest_corner(a, b)
    tree = _Tree(m, n, basis)
    is_basic = np.zeros((m, n), dtype=bool)
    for i, j in basis:
        is_basic[i, j] = True
    tol = 1e-12 * max(1.0, float(np.max(C)))
    cap = 50 * (m + n) * m * n
    it = 0
    while True:
        u, v = tree.duals(C)
        reduced = C - u[:, None] - v[None, :]
        reduced[is_basic] = 0.0
        candidates = np.flatnonzero(reduced.ravel() < -tol)
        if candidates.size == 0:
            return flow, u, v, it
        it += 1
        if it > cap:
            raise SolverError(f"transport simplex exceeded {cap} pivots on a {m}x{n} problem")
        ei, ej = divmod(int(candidates[0]), n)
        # cycle: entering cell, then the tree path from column ej back to row ei
        nodes = tree.path(m + ej, ei)
        cycle = []
        for p, q in zip(nodes[:-1], nodes[1:]):
            cycle.append((q, p - m) if p >= m else (p, q - m))
        minus = cycle[0::2]
        plus = cycle[1::2]
        theta = min(flow[c] for c in minus)
        leaving = min((c for c in minus if flow[c] == theta), key=lambda c: c[0] * n + c[1])
        for c in minus:
            flow[c] -= theta
        for c in plus:
            flow[c] += theta
        flow[ei, ej] += theta
        flow[leaving] = 0.0
        tree.remove(*leaving)
        is_basic[leaving] = False
        tree.add(ei, ej)
        is_basic[ei, ej] = True


def solve_kantorovich(mu: DiscreteMeasure, nu: DiscreteMeasure, cost) -> TransportResult:
    """Minimize sum(C * P) over couplings P of mu and nu.

    Parameters
    ----------
    mu, nu : DiscreteMeasure
        Marginals with m and n atoms.
    cost : array-like, shape (m, n)
        Finite nonnegative cost matrix.

    Returns
    -------
    TransportResult
        Optimal plan, its value and dual potentials (u, v) with u[0] = 0.
        Output is deterministic for a fixed input; among several optimal
        plans the one reached by the fixed pivot rule is returned.
    """
    C = _check_cost(cost, mu.size, nu.size)
    flow, u, v, it = _transport_simplex(mu.weights, nu.weights, C)
    plan = Coupling(mu, nu, flow)
    value = math.fsum((C * plan.mass).ravel())
    return TransportResult(plan, value, u, v, it)


def is_optimal(plan: Coupling, cost, tol: float = 1e-9) -> bool:
    C = np.asarray(cost, dtype=float)
    opt = solve_kantorovich(plan.row_measure, plan.col_measure, C).value
    return plan.cost(C) <= opt + tol


# -- vertex enumeration ------------------------------------------------------


def enumerate_vertices(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    method: str = "pivot",
    max_cells: int = VERTEX_CELL_GUARD,
) -> PolytopeVertices:
    """All vertices (basic feasible solutions) of the transportation polytope.

    ``method="trees"`` solves the basis system for every spanning tree of the
    complete bipartite graph (m + n - 1 cells) and keeps the nonnegative
    solutions. ``method="pivot"`` (default) walks the graph of feasible bases
    instead, which only touches feasible trees. Both return the same set.
    """
    m, n = mu.size, nu.size
    if m * n > max_cells:
        raise ValueError(f"vertex enumeration limited to {max_cells} cells, got {m}x{n}")
    if method == "trees":
        mats = _vertices_by_trees(mu.weights, nu.weights)
    elif method == "pivot":
        mats = _vertices_by_pivoting(mu.weights, nu.weights)
    else:
        raise ValueError(f"unknown method {method!r}")
    return PolytopeVertices([Coupling(mu, nu, X) for X in _dedupe(mats)])


def _dedupe(mats: list) -> list:
    # bucket on a grid finer than DEDUP_TOL, then confirm against bucket neighbours
    buckets: dict = {}
    uniq = []
    for X in sorted(mats, key=lambda A: tuple(A.ravel())):
        key = tuple(np.round(X.ravel() / DEDUP_TOL).astype(np.int64))
        if key in buckets and np.max(np.abs(buckets[key] - X)) <= DEDUP_TOL:
            continue
        buckets[key] = X
        uniq.append(X)
    if len(uniq) <= 64:
        keep = []
        for X in uniq:
            if all(np.max(np.abs(X - Y)) > DEDUP_TOL for Y in keep):
                keep.append(X)
        uniq = keep
    return uniq


def _vertices_by_trees(a: np.ndarray, b: np.ndarray) -> list[np.ndarray]:
    m, n = a.size, b.size
    cells = [(i, j) for i in range(m) for j in range(n)]
    out = []
    for subset in itertools.combinations(cells, m + n - 1):
        X = _solve_tree(a, b, subset)
        if X is not None:
            out.append(X)
    return out


def _solve_tree(a, b, subset):
    """Solve the basis system on a support; None if cyclic or infeasible."""
    m, n = a.size, b.size
    ra, rb = a.copy(), b.copy()
    remaining = set(subset)
    row_deg = np.bincount([i for i, _ in remaining], minlength=m)
    col_deg = np.bincount([j for _, j in remaining], minlength=n)
    if np.any(row_deg == 0) or np.any(col_deg == 0):
        return None
    X = np.zeros((m, n))
    while remaining:
        for i, j in remaining:
            if row_deg[i] == 1:
                x = ra[i]
                break
            if col_deg[j] == 1:
                x = rb[j]
                break
        else:
            return None  # all degrees >= 2: the support contains a cycle
        X[i, j] = x
        ra[i] -= x
        rb[j] -= x
        remaining.discard((i, j))
        row_deg[i] -= 1
        col_deg[j] -= 1
    if max(np.max(np.abs(ra)), np.max(np.abs(rb))) > 1e-12 or np.any(X < -1e-12):
        return None
    return np.clip(X, 0.0, None)


def _tree_cycle(cells: set, i: int, j: int) -> list:
    """Cells on the tree path from column j to row i (alternating -, +, ..., -)."""
    adj: dict = {}
    for r, c in cells:
        adj.setdefault(("r", r), []).append(("c", c))
        adj.setdefault(("c", c), []).append(("r", r))
    start, goal = ("c", j), ("r", i)
    prev = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj.get(node, ()):
            if nb not in prev:
                prev[nb] = node
                queue.append(nb)
    path = [goal]
    while prev[path[-1]] is not None:
        path.append(prev[path[-1]])
    path.reverse()
    return [(q[1], p[1]) if p[0] == "c" else (p[1], q[1]) for p, q in zip(path[:-1], path[1:])]


def _vertices_by_pivoting(a: np.ndarray, b: np.ndarray) -> list[np.ndarray]:
    """Breadth-first search over feasible bases connected by simplex pivots.

    Each basis is solved from scratch; every leaving cell that attains the
    ratio-test minimum is explored, so all feasible bases (hence all
    vertices) are reached.
    """
    m, n = a.size, b.size
    _, start = _northwest_corner(a, b)
    start = frozenset(start)
    seen = {start}
    queue = deque([start])
    out = []
    while queue:
        basis = queue.popleft()
        X = _solve_tree(a, b, basis)
        if X is None:
            continue
        out.append(X)
        for i in range(m):
            for j in range(n):
                if (i, j) in basis:
                    continue
                minus = _tree_cycle(basis, i, j)[0::2]
                theta = min(X[c] for c in minus)
                for leave in minus:
                    if X[leave] <= theta + 1e-12:
                        nxt = (basis - {leave}) | {(i, j)}
                        if nxt not in seen:
                            seen.add(nxt)
                            queue.append(nxt)
    return out


# -- generic LPs ---------------------------------------------------------------


def _marginal_constraints(shape: tuple) -> np.ndarray:
    """Rows of the equality system 'axis-a marginal of the flattened array'."""
    N = int(np.prod(shape))
    idx = np.arange(N).reshape(shape)
    blocks = []
    for a, size in enumerate(shape):
        A = np.zeros((size, N))
        moved = np.moveaxis(idx, a, 0).reshape(size, -1)
        for r in range(size):
            A[r, moved[r]] = 1.0
        blocks.append(A)
    return np.vstack(blocks)


_HIGHS_OPTS = {
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


def lp_minimize(c, A_eq=None, b_eq=None, A_ub=None, b_ub=None, bounds=(0, None)):
    """Dense LP via the HiGHS dual simplex; returns (x, value).

    Raises SolverError if HiGHS does not report an optimal solution.
    """
    res = linprog(
        c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
        method="highs-ds", options=_HIGHS_OPTS,
    )
    if res.status != 0:
        raise SolverError(f"LP failed: {res.message}")
    return res.x, float(res.fun)


def multimarginal_lp(weights: list, cost: np.ndarray, cap: int = CELL_CAP):
    """Solve the k-marginal problem on raw weight vectors; returns (mass, value)."""
    cost = np.asarray(cost, dtype=float)
    shape = tuple(len(w) for w in weights)
    if cost.shape != shape:
        raise ValueError(f"cost has shape {cost.shape}, expected {shape}")
    if len(shape) < 2:
        raise ValueError("need at least two marginals")
    if cost.size > cap:
        raise ValueError(f"{cost.size} cells exceed the cap of {cap}")
    if not np.all(np.isfinite(cost)) or np.any(cost < 0):
        raise ValueError("cost must be finite and nonnegative")
    A = _marginal_constraints(shape)
    b = np.concatenate([np.asarray(w, dtype=float) for w in weights])
    x, _ = lp_minimize(cost.ravel(), A_eq=A, b_eq=b)
    mass = np.clip(x, 0.0, None).reshape(shape)
    return mass, math.fsum((mass * cost).ravel())


def solve_multimarginal(marginals: list, cost, cap: int = CELL_CAP):
    """Minimize sum(cost * P) over k-dimensional P with the given marginals.

    Returns ``(MultiCoupling, value)``.
    """
    if len(marginals) < 2:
        raise ValueError("need at least two marginals")
    mass, value = multimarginal_lp([m.weights for m in marginals], cost, cap)
    return MultiCoupling(tuple(marginals), mass), value


def basic_solutions(A: np.ndarray, b: np.ndarray, tol: float = 1e-10) -> list[np.ndarray]:
    """Every basic feasible solution of {x >= 0 : A x = b} by brute force.

    Tries all column subsets of size rank(A); exponential, for oracles only.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    r = np.linalg.matrix_rank(A)
    N = A.shape[1]
    out = []
    for cols in itertools.combinations(range(N), r):
        sub = A[:, cols]
        if np.linalg.matrix_rank(sub) < r:
            continue
        xs, *_ = np.linalg.lstsq(sub, b, rcond=None)
        if np.max(np.abs(sub @ xs - b)) > tol or np.any(xs < -tol):
            continue
        x = np.zeros(N)
        x[list(cols)] = np.clip(xs, 0.0, None)
        if all(np.max(np.abs(x - y)) > DEDUP_TOL for y in out):
            out.append(x)
    return out


def multimarginal_vertex_oracle(weights: list, cost: np.ndarray) -> float:
    """Minimum of the multimarginal objective over all basic feasible solutions."""
    cost = np.asarray(cost, dtype=float)
    A = _marginal_constraints(cost.shape)
    b = np.concatenate([np.asarray(w, dtype=float) for w in weights])
    sols = basic_solutions(A, b)
    return min(math.fsum(x * cost.ravel()) for x in sols)
