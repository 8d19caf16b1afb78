"""
Seeded randomized invariant suites.

Every check is an inequality lhs <= rhs + tol (equalities are written as
|a - b| <= 0 + tol). Instance i of a run with seed s draws everything from
numpy's default_rng([s, i]), so results do not depend on how instances are
distributed over worker processes.
"""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .gluing import carry_plan, carry_plan_both, carry_plan_multi, carry_plan_wp, glue
from .hausdorff import dist_to_polytope, hausdorff_exact
from .measures import Coupling, DiscreteMeasure, make_measure, pushforward_projection
from .metrics import EUCLIDEAN, Truncated, d_kantorovich, d_kantorovich_dual, d_kr, w_p
from .solver import enumerate_vertices, solve_kantorovich

# suite names are part of the command-line interface; "theorem1" holds the carried-plan bounds
SUITES = ("theorem1", "hausdorff", "metrics", "solver", "gluing")
DEFAULT_INSTANCES = {"theorem1": 1000, "hausdorff": 200, "metrics": 300, "solver": 500, "gluing": 500}


def _measure(rng, n: int, dim: int) -> DiscreteMeasure:
    return make_measure(rng.random((n, dim)), rng.random(n) + 0.05)


def _coupling(rng, mu: DiscreteMeasure, nu: DiscreteMeasure) -> Coupling:
    """A random element of Pi(mu, nu): the solver optimum for a random cost mixed with the product."""
    opt = solve_kantorovich(mu, nu, rng.random((mu.size, nu.size))).plan.mass
    lam = rng.random()
    return Coupling(mu, nu, lam * opt + (1 - lam) * np.outer(mu.weights, nu.weights))


def _matrix_coupling(mu_pts, nu_pts, M) -> Coupling:
    """Coupling with mass M (normalized) on given supports; marginals are read off M."""
    M = M / M.sum()
    return Coupling(DiscreteMeasure(mu_pts, M.sum(axis=1)), DiscreteMeasure(nu_pts, M.sum(axis=0)), M)


def _kernel_coupling(rng, mu: DiscreteMeasure, n: int, dim: int) -> Coupling:
    """Coupling with first marginal mu and a random row-stochastic kernel."""
    K = rng.random((mu.size, n)) + 0.01
    K /= K.sum(axis=1, keepdims=True)
    mass = mu.weights[:, None] * K
    return Coupling(mu, DiscreteMeasure(rng.random((n, dim)), mass.sum(axis=0)), mass)


def _size(rng, hi: int) -> int:
    return int(rng.integers(1, hi + 1))


# -- suites: each returns a list of (check, lhs, rhs, tol) ----------------------


def _carry_bounds(rng):
    dim = int(rng.integers(1, 3))
    m1, n1, m2, n2 = (_size(rng, 5) for _ in range(4))
    mu1, nu1 = _measure(rng, m1, dim), _measure(rng, n1, dim)
    mu2, nu2 = _measure(rng, m2, dim), _measure(rng, n2, dim)
    sigma = _coupling(rng, mu1, nu1)
    out = []
    r = carry_plan(sigma, mu2)
    out.append(("carry_plan", r.lhs, r.rhs, 1e-8))
    drift = float(np.max(np.abs(r.plan.mass.sum(axis=0) - sigma.mass.sum(axis=0))))
    out.append(("carry_plan_keeps_nu", drift, 0.0, 1e-10))
    r = carry_plan_both(sigma, mu2, nu2)
    out.append(("carry_plan_both", r.lhs, r.rhs, 1e-8))
    for p in (1, 2):
        r = carry_plan_wp(sigma, mu2, nu2, p)
        out.append((f"carry_plan_wp{p}", r.lhs, r.rhs, 1e-8))
    a, b, c = (_size(rng, 3) for _ in range(3))
    x = _measure(rng, a, dim)
    c12 = _kernel_coupling(rng, x, b, dim)
    c23 = _kernel_coupling(rng, c12.col_measure, c, dim)
    multi = glue(c12, c23)
    new = [_measure(rng, _size(rng, 3), dim) for _ in range(3)]
    r = carry_plan_multi(multi, new)
    out.append(("carry_plan_multi3", r.lhs, r.rhs, 1e-8))
    return out


def _hausdorff(rng, mixtures: int):
    dim = int(rng.integers(1, 3))
    mu1, nu1, mu2, nu2 = (_measure(rng, 2, dim) for _ in range(4))
    rep = hausdorff_exact(mu1, nu1, mu2, nu2)
    back = hausdorff_exact(mu2, nu2, mu1, nu1)
    out = [
        ("exact_le_upper", rep.exact, rep.upper_bound, 1e-8),
        ("symmetry", abs(rep.exact - back.exact), 0.0, 1e-9),
        ("member_distance_zero", dist_to_polytope(_coupling(rng, mu2, nu2), mu2, nu2), 0.0, 1e-9),
    ]
    X, Y = mu1.support, nu1.support
    for _ in range(mixtures):
        A = rng.random((2, 2)) + 0.01
        B = rng.random((2, 2)) + 0.01
        A /= A.sum()
        B /= B.sum()
        lam = rng.random()
        s1, s2 = _matrix_coupling(X, Y, A), _matrix_coupling(X, Y, B)
        mix = _matrix_coupling(X, Y, lam * A + (1 - lam) * B)
        lhs = dist_to_polytope(mix, mu2, nu2)
        rhs = lam * dist_to_polytope(s1, mu2, nu2) + (1 - lam) * dist_to_polytope(s2, mu2, nu2)
        out.append(("lp_value_convexity", lhs, rhs, 1e-9))
    return out


def _metrics(rng):
    dim = int(rng.integers(1, 3))
    a, b, c = (_measure(rng, _size(rng, 4), dim) for _ in range(3))
    dists = {
        "d_K": d_kantorovich,
        "d_KR": d_kr,
        "W1": lambda u, v: w_p(u, v, 1),
        "W2": lambda u, v: w_p(u, v, 2),
    }
    out = []
    for name, d in dists.items():
        ab, bc, ac, ba = d(a, b), d(b, c), d(a, c), d(b, a)
        out.append((f"{name}_triangle", ac, ab + bc, 1e-9))
        out.append((f"{name}_symmetry", abs(ab - ba), 0.0, 1e-9))
        out.append((f"{name}_identity", d(a, a), 0.0, 1e-9))
        out.append((f"{name}_nonnegative", -ab, 0.0, 1e-9))
    kr = d_kr(a, b)
    dk_trunc = d_kantorovich(a, b, Truncated())
    out.append(("d_KR_lower_sandwich", 0.5 * dk_trunc, kr, 1e-9))
    out.append(("d_KR_upper_sandwich", kr, 2 * dk_trunc, 1e-9))
    out.append(("d_K_primal_dual", abs(d_kantorovich(a, b) - d_kantorovich_dual(a, b, EUCLIDEAN)), 0.0, 1e-8))
    return out


def _solver(rng):
    m, n = _size(rng, 4), _size(rng, 4)
    kind = int(rng.integers(3))
    if kind == 0:
        mu = make_measure(np.arange(m)[:, None], np.ones(m))
        nu = make_measure(np.arange(n)[:, None], np.ones(n))
    else:
        mu, nu = _measure(rng, m, 1), _measure(rng, n, 1)
    # small integer costs make ties and degenerate pivots common
    C = rng.integers(0, 4, (m, n)).astype(float) if kind < 2 else rng.random((m, n))
    res = solve_kantorovich(mu, nu, C)
    vmin = float(np.min(enumerate_vertices(mu, nu).values(C)))
    return [
        ("simplex_eq_vertex_min", abs(res.value - vmin), 0.0, 1e-9),
        ("duality_gap", res.duality_gap(), 0.0, 1e-8),
    ]


def _gluing(rng):
    dim = int(rng.integers(1, 3))
    x = _measure(rng, _size(rng, 4), dim)
    c12 = _kernel_coupling(rng, x, _size(rng, 4), dim)
    c23 = _kernel_coupling(rng, c12.col_measure, _size(rng, 4), dim)
    lam = glue(c12, c23)
    p12 = pushforward_projection(lam, (0, 1)).mass
    p23 = pushforward_projection(lam, (1, 2)).mass
    sigma = _coupling(rng, c23.row_measure, c23.col_measure)
    r = carry_plan(sigma, _measure(rng, _size(rng, 4), dim))
    return [
        ("projection_01", float(np.max(np.abs(p12 - c12.mass))), 0.0, 1e-10),
        ("projection_12", float(np.max(np.abs(p23 - c23.mass))), 0.0, 1e-10),
        ("carry_keeps_nu", float(np.max(np.abs(r.plan.mass.sum(axis=0) - sigma.mass.sum(axis=0)))), 0.0, 1e-10),
    ]


def run_instance(suite: str, seed: int, i: int, instances: int = 1):
    rng = np.random.default_rng([seed, i])
    if suite == "theorem1":
        return _carry_bounds(rng)
    if suite == "hausdorff":
        # spread 2.5 convexity mixtures per instance evenly (500 for 200 instances)
        total = (5 * instances) // 2
        return _hausdorff(rng, total * (i + 1) // instances - total * i // instances)
    if suite == "metrics":
        return _metrics(rng)
    if suite == "solver":
        return _solver(rng)
    if suite == "gluing":
        return _gluing(rng)
    raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")


def _run_instance_args(args):
    return run_instance(*args)


@dataclass(frozen=True)
class CheckStats:
    check: str
    count: int
    violations: int
    worst_margin: float  # max of lhs - rhs over instances
    first_violation: int | None


@dataclass(frozen=True)
class SuiteResult:
    suite: str
    seed: int
    instances: int
    stats: tuple

    @property
    def checks(self) -> int:
        return sum(s.count for s in self.stats)

    @property
    def violations(self) -> int:
        return sum(s.violations for s in self.stats)

    def summary_line(self) -> str:
        return (f"suite={self.suite} seed={self.seed} instances={self.instances} "
                f"checks={self.checks} violations={self.violations}")

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("suite", "check", "count", "violations", "worst_margin", "first_violation"))
        for s in self.stats:
            w.writerow([self.suite, s.check, s.count, s.violations, format(s.worst_margin, ".17g"),
                        "" if s.first_violation is None else s.first_violation])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "suite": self.suite, "seed": self.seed, "instances": self.instances,
            "checks": self.checks, "violations": self.violations,
            "stats": [s.__dict__ for s in self.stats],
        }


def run_suite(suite: str, instances: int | None = None, seed: int = 0, jobs: int = 1) -> SuiteResult:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; choose from {SUITES}")
    instances = DEFAULT_INSTANCES[suite] if instances is None else int(instances)
    if instances < 1:
        raise ValueError("instances must be positive")
    args = [(suite, seed, i, instances) for i in range(instances)]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as ex:
            results = list(ex.map(_run_instance_args, args, chunksize=max(1, instances // (4 * jobs))))
    else:
        results = [_run_instance_args(a) for a in args]
    agg: dict = {}
    for i, checks in enumerate(results):
        for name, lhs, rhs, tol in checks:
            count, bad, worst, first = agg.get(name, (0, 0, -np.inf, None))
            margin = float(lhs - rhs)
            violated = not (lhs <= rhs + tol)
            agg[name] = (count + 1, bad + violated, max(worst, margin),
                         first if first is not None or not violated else i)
    stats = tuple(CheckStats(k, *agg[k]) for k in agg)
    return SuiteResult(suite, seed, instances, stats)


def run_suites(names, instances=None, seed: int = 0, jobs: int = 1) -> list:
    return [run_suite(s, instances, seed, jobs) for s in names]


def render(results, fmt: str = "csv") -> str:
    """Deterministic text output for a list of suite results."""
    if fmt == "json":
        return json.dumps([r.to_dict() for r in results], indent=1, sort_keys=True) + "\n"
    parts = []
    for k, r in enumerate(results):
        text = r.to_csv()
        parts.append(text if k == 0 else text.split("\n", 1)[1])
    return "".join(parts)
