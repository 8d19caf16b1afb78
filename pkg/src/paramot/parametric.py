"""
Parameter-dependent transport problems t -> (mu_t, nu_t, h_t).

Plans at neighbouring parameters are compared with the Kantorovich-Rubinshtein
distance on X x Y (sum metric), which metrizes weak convergence.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gluing import carry_plan_both
from .measures import (
    Coupling,
    CostSpec,
    DiscreteMeasure,
    coupling_to_measure,
    eval_cost,
    uniform_grid_measure,
)
from .metrics import EUCLIDEAN, DirectSum, GroundCost, d_kr
from .solver import enumerate_vertices, lp_minimize, _marginal_constraints, solve_kantorovich

UNIQUENESS_GAP = 1e-7
ENUMERATION_CELLS = 9
REDUCED_COST_TOL = 1e-9
BISECTION_STEPS = 40


def fmt(x) -> str:
    """Round-trippable CSV number (17 significant digits); empty for None."""
    if x is None:
        return ""
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class ParamFamily:
    """A family t -> (mu_t, nu_t, h_t) sampled on an increasing grid.

    ``envelope(t)`` optionally returns ``(a_t, b_t)``: arrays on the supports
    of mu_t and nu_t with h_t(x_i, y_j) <= a_t[i] + b_t[j].
    """

    t_grid: np.ndarray
    mu_of_t: Callable[[float], DiscreteMeasure]
    nu_of_t: Callable[[float], DiscreteMeasure]
    cost_of_t: Callable[[float], CostSpec]
    envelope: Callable | None = None
    name: str = ""

    def __post_init__(self):
        grid = np.asarray(self.t_grid, dtype=float).ravel()
        if grid.size == 0:
            raise ValueError("t_grid must be nonempty")
        if np.any(np.diff(grid) <= 0):
            raise ValueError("t_grid must be strictly increasing")
        grid.setflags(write=False)
        object.__setattr__(self, "t_grid", grid)

    def problem(self, t: float):
        mu, nu = self.mu_of_t(t), self.nu_of_t(t)
        if mu.dim != nu.dim:
            raise ValueError(f"t={t}: marginals live in different dimensions")
        return mu, nu, eval_cost(self.cost_of_t(t), mu, nu)

    def solve(self, t: float):
        mu, nu, C = self.problem(t)
        return solve_kantorovich(mu, nu, C), C


def plan_distance(p: Coupling, q: Coupling) -> float:
    """d_KR between two plans as measures on X x Y with the sum metric."""
    ground = DirectSum((EUCLIDEAN, EUCLIDEAN), (p.row_measure.dim, p.col_measure.dim))
    return d_kr(coupling_to_measure(p), coupling_to_measure(q), ground)


@dataclass(frozen=True, eq=False)
class SweepRow:
    t: float
    value: float
    plan: Coupling
    plan_jump_prev: float | None
    eps_slack: float
    mix: float | None = None


@dataclass(frozen=True, eq=False)
class SweepReport:
    """Per-parameter optimal values and selected plans.

    ``eps_slack`` is the excess cost of the selected plan over the optimum
    (zero up to rounding for exact solver plans).
    """

    rows: list
    name: str = ""

    CSV_COLUMNS = ("t", "value", "plan_jump_prev", "eps_slack")

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.rows])

    @property
    def plans(self) -> list:
        return [r.plan for r in self.rows]

    @property
    def jumps(self) -> np.ndarray:
        return np.array([r.plan_jump_prev for r in self.rows[1:]])

    @property
    def max_value_jump(self) -> float:
        v = self.values
        return float(np.max(np.abs(np.diff(v)))) if v.size > 1 else 0.0

    @property
    def max_plan_jump(self) -> float:
        j = self.jumps
        return float(np.max(j)) if j.size else 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.CSV_COLUMNS)
        for r in self.rows:
            w.writerow([fmt(r.t), fmt(r.value), fmt(r.plan_jump_prev), fmt(r.eps_slack)])
        return buf.getvalue()

    def to_json(self, include_plans: bool = False) -> str:
        rows = []
        for r in self.rows:
            d = {"t": r.t, "value": r.value, "plan_jump_prev": r.plan_jump_prev,
                 "eps_slack": r.eps_slack}
            if r.mix is not None:
                d["mix"] = r.mix
            if include_plans:
                d["plan"] = r.plan.mass.tolist()
            rows.append(d)
        doc = {
            "family": self.name,
            "rows": rows,
            "summary": {"max_value_jump": self.max_value_jump, "max_plan_jump": self.max_plan_jump},
        }
        return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def _with_jumps(entries, name, jobs=1) -> SweepReport:
    plans = [e[2] for e in entries]
    pairs = list(zip(plans[:-1], plans[1:]))
    if jobs > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(jobs) as ex:
            jumps = list(ex.map(lambda pq: plan_distance(*pq), pairs))
    else:
        jumps = [plan_distance(p, q) for p, q in pairs]
    rows = []
    for k, (t, value, plan, slack, mix) in enumerate(entries):
        rows.append(SweepRow(t, value, plan, jumps[k - 1] if k else None, slack, mix))
    return SweepReport(rows, name)


def sweep_value(family: ParamFamily, jobs: int = 1) -> SweepReport:
    """Solve every grid point exactly and record values and plan jumps."""
    def one(t):
        res, C = family.solve(float(t))
        return (float(t), res.value, res.plan, max(res.plan.cost(C) - res.value, 0.0), None)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            entries = list(ex.map(one, family.t_grid))
    else:
        entries = [one(t) for t in family.t_grid]
    return _with_jumps(entries, family.name, jobs)


# -- uniform integrability -----------------------------------------------------


@dataclass(frozen=True, eq=False)
class IntegrabilityReport:
    R_grid: np.ndarray
    tail_sup: np.ndarray  # sup over t of the envelope tail mass at each R
    vanishing: bool
    violations: list  # (t, i, j, h, a_i + b_j)
    threshold: float

    @property
    def dominated(self) -> bool:
        return not self.violations


def bounded_envelope(family: ParamFamily) -> Callable:
    """a_t = b_t = max h_t on the supports (available for any finite support)."""
    def env(t):
        mu, nu, C = family.problem(t)
        top = float(np.max(C))
        return np.full(mu.size, top), np.full(nu.size, top)
    return env


def check_uniform_integrability(
    family: ParamFamily,
    R_grid,
    threshold: float = 1e-9,
    auto_envelope: bool = False,
) -> IntegrabilityReport:
    """Tabulate sup_t of the envelope tails and check h_t <= a_t + b_t.

    For each R the table holds sup over the grid of
    sum_{a_t >= R} a_t mu_t + sum_{b_t >= R} b_t nu_t. The tail is reported
    as vanishing when its value at the largest R is at most ``threshold``.
    """
    env = family.envelope
    if env is None:
        if not auto_envelope:
            raise ValueError("family has no envelope (pass auto_envelope=True for bounded costs)")
        env = bounded_envelope(family)
    R_grid = np.asarray(R_grid, dtype=float).ravel()
    tails = np.zeros(R_grid.size)
    violations = []
    for t in family.t_grid:
        mu, nu, C = family.problem(float(t))
        a, b = (np.asarray(v, dtype=float) for v in env(float(t)))
        if a.shape != (mu.size,) or b.shape != (nu.size,):
            raise ValueError(f"t={t}: envelope shapes do not match the supports")
        if np.any(a < 0) or np.any(b < 0):
            raise ValueError(f"t={t}: envelope must be nonnegative")
        bound = a[:, None] + b[None, :]
        for i, j in np.argwhere(C > bound + 1e-12):
            violations.append((float(t), int(i), int(j), float(C[i, j]), float(bound[i, j])))
        for k, R in enumerate(R_grid):
            tail = math.fsum(a[a >= R] * mu.weights[a >= R]) + math.fsum(b[b >= R] * nu.weights[b >= R])
            tails[k] = max(tails[k], tail)
    vanishing = bool(tails[-1] <= threshold) if tails.size else True
    return IntegrabilityReport(R_grid, tails, vanishing, violations, threshold)


# -- uniqueness and plan convergence ------------------------------------------


def probe_uniqueness(
    mu: DiscreteMeasure,
    nu: DiscreteMeasure,
    C: np.ndarray,
    plan: Coupling | None = None,
    method: str = "auto",
) -> bool:
    """Whether the transport problem has a unique optimal plan.

    ``method="vertices"``: the second-best vertex must be worse than the
    optimum by more than 1e-7. ``method="face"``: for any optimal dual pair
    (u, v) the optimal plans are exactly the couplings supported on the cells
    with zero reduced cost C - u - v, so the face LP maximizes the mass such
    a coupling can put outside the support of the solver's (vertex) optimum.
    A vertex is the only coupling supported inside its own support, hence
    the optimum is unique iff that maximum vanishes. ``"auto"`` enumerates
    up to 9 cells and uses the face LP above.
    """
    C = np.asarray(C, dtype=float)
    if method == "auto":
        method = "vertices" if mu.size * nu.size <= ENUMERATION_CELLS else "face"
    if method == "vertices":
        vals = np.sort(enumerate_vertices(mu, nu).values(C))
        return bool(vals.size == 1 or vals[1] > vals[0] + UNIQUENESS_GAP)
    if method != "face":
        raise ValueError(f"unknown method {method!r}")
    res = solve_kantorovich(mu, nu, C)
    plan = res.plan if plan is None else plan
    reduced = C - res.dual_u[:, None] - res.dual_v[None, :]
    tied = reduced <= REDUCED_COST_TOL * (1.0 + np.max(np.abs(C)))
    outside = (plan.mass <= 1e-12).ravel().astype(float)
    bounds = [(0, None) if z else (0, 0) for z in tied.ravel()]
    A = _marginal_constraints(C.shape)
    b = np.concatenate([mu.weights, nu.weights])
    _, neg = lp_minimize(-outside, A_eq=A, b_eq=b, bounds=bounds)
    return bool(-neg <= UNIQUENESS_GAP)


@dataclass(frozen=True, eq=False)
class PlanConvergenceReport:
    t_star: float
    ts: np.ndarray          # grid points, farthest from t_star first
    distances: np.ndarray   # d_KR(sigma_t, sigma_{t_star})
    unique: np.ndarray      # uniqueness probe per grid point
    unique_at_star: bool
    one_sided_gap: float | None  # d_KR between the nearest plans left and right of t_star
    verdict: str


def check_plan_convergence(
    family: ParamFamily,
    t_star: float,
    side: str = "both",
    tol: float = 1e-6,
) -> PlanConvergenceReport:
    """Track d_KR(sigma_t, sigma_{t_star}) as t approaches t_star along the grid.

    Verdicts: "inconclusive (non-unique optimum)" if any probed problem has
    several optimal plans; "consistent with weak convergence" if the
    distances are nonincreasing (within 1e-9) and end below ``tol``;
    "non-convergent" otherwise.
    """
    grid = family.t_grid
    if not (grid[0] <= t_star <= grid[-1]):
        raise ValueError("t_star must lie in the closure of the grid")
    if side == "left":
        ts = grid[grid < t_star]
    elif side == "right":
        ts = grid[grid > t_star]
    elif side == "both":
        ts = grid[grid != t_star]
    else:
        raise ValueError("side must be 'left', 'right' or 'both'")
    ts = ts[np.argsort(-np.abs(ts - t_star), kind="stable")]

    star, C_star = family.solve(float(t_star))
    mu, nu, _ = family.problem(float(t_star))
    unique_star = probe_uniqueness(mu, nu, C_star, star.plan)
    dists, uniq, plans = [], [], {}
    for t in ts:
        res, C = family.solve(float(t))
        plans[float(t)] = res.plan
        dists.append(plan_distance(res.plan, star.plan))
        m_t, n_t, _ = family.problem(float(t))
        uniq.append(probe_uniqueness(m_t, n_t, C, res.plan))
    dists = np.array(dists)
    uniq = np.array(uniq, dtype=bool)

    left = grid[grid < t_star]
    right = grid[grid > t_star]
    gap = None
    if left.size and right.size and float(left[-1]) in plans and float(right[0]) in plans:
        gap = plan_distance(plans[float(left[-1])], plans[float(right[0])])

    if not unique_star or not np.all(uniq):
        verdict = "inconclusive (non-unique optimum)"
    elif dists.size and np.all(np.diff(dists) <= 1e-9) and dists[-1] <= tol:
        verdict = "consistent with weak convergence"
    elif not dists.size:
        verdict = "consistent with weak convergence"
    else:
        verdict = "non-convergent"
    return PlanConvergenceReport(float(t_star), ts, dists, uniq, bool(unique_star), gap, verdict)


# -- eps-optimal path following --------------------------------------------------


def select_eps_optimal_path(
    family: ParamFamily,
    eps: float,
    alpha: GroundCost = EUCLIDEAN,
    beta: GroundCost = EUCLIDEAN,
) -> SweepReport:
    """Heuristic continuous selection of eps-optimal plans along the grid.

    The first plan is the solver optimum. At each later grid point the
    previous plan is carried to the new marginals (two-step gluing) and
    mixed with the new solver optimum using the smallest weight (found by
    40 bisection steps) that makes the mixture eps-optimal. ``mix`` in each
    row is that weight; ``eps_slack`` is the excess over the optimum, which
    never exceeds eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    entries = []
    prev = None
    for t in family.t_grid:
        t = float(t)
        res, C = family.solve(t)
        K = res.value
        if prev is None:
            plan, lam = res.plan, 1.0
        else:
            mu, nu = res.plan.row_measure, res.plan.col_measure
            carried = carry_plan_both(prev, mu, nu, alpha, beta).plan
            c0 = carried.cost(C)

            def ok(lmb):
                return (1 - lmb) * c0 + lmb * K <= K + eps

            if ok(0.0):
                lam = 0.0
            else:
                lo, hi = 0.0, 1.0
                for _ in range(BISECTION_STEPS):
                    mid = 0.5 * (lo + hi)
                    if ok(mid):
                        hi = mid
                    else:
                        lo = mid
                lam = hi
            mass = (1 - lam) * carried.mass + lam * res.plan.mass
            plan = Coupling(mu, nu, mass)
        excess = plan.cost(C) - K
        if excess > eps + 1e-9:
            raise AssertionError(f"t={t}: selected plan exceeds eps ({excess} > {eps})")
        entries.append((t, K, plan, max(excess, 0.0), lam))
        prev = plan
    return _with_jumps(entries, family.name)


# -- gallery ------------------------------------------------------------------------

GALLERY = ("example-fg", "example-A")


def _fg_cost(t: float) -> CostSpec:
    if t == 0:
        return CostSpec.builtin("squared-shift", t=0.0, f="identity")
    k = int(round(1.0 / t))
    if k < 1 or abs(1.0 / k - t) > 1e-12:
        raise ValueError(f"example-fg is only defined at t = 1/k and t = 0, got {t}")
    return CostSpec.builtin("squared-shift", t=t, f="identity" if k % 2 else "reflection")


def _family_a_cost(t: float) -> CostSpec:
    return CostSpec.builtin("family-A", t=t)


def gallery(name: str, n: int, t_grid=None, n_terms: int = 12) -> ParamFamily:
    """The two families without a continuous optimal selection, on uniform_grid(n).

    example-fg: t in {0} U {1/k : k <= n_terms}; h_t = t|y - x|^2 for odd k
    and t|y - (1 - x)|^2 for even k, h_0 = 0.
    example-A: h_t = min(|x-y|, |x+y-1| + t) for t >= 0 and
    min(|x-y| - t, |x+y-1|) for t < 0; default grid is 101 points on
    [-0.5, 0.5].
    """
    if n < 2:
        raise ValueError("gallery families need n >= 2")
    grid_measure = uniform_grid_measure(n)
    if name == "example-fg":
        if t_grid is None:
            t_grid = [0.0] + sorted(1.0 / k for k in range(1, n_terms + 1))
        cost = _fg_cost
    elif name == "example-A":
        if t_grid is None:
            t_grid = np.arange(-50, 51) / 100.0
        cost = _family_a_cost
    else:
        raise ValueError(f"unknown gallery family {name!r}; choose from {GALLERY}")
    fam = ParamFamily(np.asarray(t_grid, dtype=float), lambda t: grid_measure,
                      lambda t: grid_measure, cost, name=name)
    # both families are bounded on the grid, so the constant envelope is available
    return ParamFamily(fam.t_grid, fam.mu_of_t, fam.nu_of_t, cost,
                       envelope=bounded_envelope(fam), name=name)
