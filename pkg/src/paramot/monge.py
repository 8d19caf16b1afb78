"""
Monge maps on discrete measures.

A map is stored as a table: one image point per source atom. On a finite
space every map is continuous, so only the conclusions of the
convergence-in-measure statements can be exercised here.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .measures import (
    MERGE_TOL,
    Coupling,
    CostSpec,
    DiscreteMeasure,
    eval_cost,
    make_measure,
    uniform_grid_measure,
)
from .metrics import total_variation
from .solver import solve_kantorovich

CUM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MongeMap:
    """x -> images[k] for x = domain[k]."""

    domain: np.ndarray
    images: np.ndarray

    def __post_init__(self):
        dom = np.asarray(self.domain, dtype=float)
        img = np.asarray(self.images, dtype=float)
        if dom.ndim == 1:
            dom = dom[:, None]
        if img.ndim == 1:
            img = img[:, None]
        if dom.shape[0] != img.shape[0]:
            raise ValueError(f"{dom.shape[0]} domain points but {img.shape[0]} images")
        if not (np.all(np.isfinite(dom)) and np.all(np.isfinite(img))):
            raise ValueError("map table must be finite")
        dom.setflags(write=False)
        img.setflags(write=False)
        object.__setattr__(self, "domain", dom)
        object.__setattr__(self, "images", img)

    @classmethod
    def from_function(cls, mu: DiscreteMeasure, f) -> "MongeMap":
        return cls(mu.support, np.array([np.atleast_1d(f(x)) for x in mu.support], dtype=float))

    def index_of(self, x) -> int:
        hit = np.flatnonzero(np.max(np.abs(self.domain - np.asarray(x, dtype=float)), axis=1) < MERGE_TOL)
        if hit.size == 0:
            raise ValueError(f"map is undefined at {np.asarray(x).tolist()}")
        return int(hit[0])

    def __call__(self, x) -> np.ndarray:
        return self.images[self.index_of(x)]

    def on(self, mu: DiscreteMeasure) -> np.ndarray:
        """Images of the atoms of mu, in mu's order."""
        return np.array([self(x) for x in mu.support])


def pushforward(mu: DiscreteMeasure, T: MongeMap) -> DiscreteMeasure:
    """mu o T^{-1}: distinct images with summed preimage masses, in lexicographic order."""
    pts = T.on(mu)
    order = np.lexsort(pts.T[::-1])
    return make_measure(pts[order], mu.weights[order])


def induced_coupling(mu: DiscreteMeasure, T: MongeMap, target: DiscreteMeasure | None = None) -> Coupling:
    """The plan putting mass mu_i at (x_i, T(x_i)).

    Columns follow the atoms of ``target`` when given (it must equal the
    pushforward), otherwise those of :func:`pushforward`.
    """
    nu = pushforward(mu, T)
    if target is not None:
        if not nu.allclose(target):
            raise ValueError("target is not the image of mu under T")
        nu = target
    mass = np.zeros((mu.size, nu.size))
    for i, y in enumerate(T.on(mu)):
        j = int(np.argmax(np.max(np.abs(nu.support - y), axis=1) < MERGE_TOL))
        mass[i, j] = mu.weights[i]
    return Coupling(mu, nu, mass)


def monge_cost(mu: DiscreteMeasure, T: MongeMap, cost: CostSpec) -> float:
    """sum_i mu_i h(x_i, T(x_i)); checked against the Kantorovich value of (mu, T_* mu)."""
    sigma = induced_coupling(mu, T)
    C = eval_cost(cost, mu, sigma.col_measure)
    value = sigma.cost(C)
    K = solve_kantorovich(mu, sigma.col_measure, C).value
    if value < K - 1e-10:
        raise AssertionError(f"Monge cost {value} below Kantorovich value {K}")
    return value


def monotone_map_1d(mu: DiscreteMeasure, nu: DiscreteMeasure) -> MongeMap | None:
    """Nondecreasing rearrangement of mu onto nu, or None if mass must split.

    Each atom of mu occupies an interval of the cumulative distribution; the
    map exists exactly when every such interval lies inside the interval of
    a single atom of nu. The induced plan is then optimal for |x - y|^2,
    which is checked against the solver.
    """
    if mu.dim != 1 or nu.dim != 1:
        raise ValueError("monotone maps are only defined on the line")
    ix = np.argsort(mu.support[:, 0], kind="stable")
    jy = np.argsort(nu.support[:, 0], kind="stable")
    F = np.cumsum(mu.weights[ix])
    G = np.cumsum(nu.weights[jy])
    G[-1] = F[-1] = 1.0
    images = np.empty(mu.size)
    lo = 0.0
    j = 0
    for k, i in enumerate(ix):
        hi = F[k]
        while j < nu.size - 1 and G[j] <= lo + CUM_TOL:
            j += 1
        if hi > G[j] + CUM_TOL:
            return None
        images[i] = nu.support[jy[j], 0]
        lo = hi
    T = MongeMap(mu.support, images[:, None])
    sigma = induced_coupling(mu, T)
    if not sigma.col_measure.allclose(nu):
        return None
    C = eval_cost(CostSpec.builtin("power", p=2), mu, sigma.col_measure)
    opt = solve_kantorovich(mu, sigma.col_measure, C).value
    if sigma.cost(C) > opt + 1e-9:
        raise AssertionError("monotone rearrangement is not optimal for the quadratic cost")
    return T


@dataclass(frozen=True, eq=False)
class MeasureConvergenceTable:
    """mu0(d(T_n, T0) >= delta) for each map index n and threshold delta."""

    ns: list
    deltas: np.ndarray
    masses: np.ndarray  # shape (len(ns), len(deltas))

    @property
    def verdicts(self) -> dict:
        out = {}
        for k, d in enumerate(self.deltas):
            col = self.masses[:, k]
            ok = bool(np.all(np.diff(col) <= 0) and col[-1] == 0)
            out[float(d)] = "decreasing to 0" if ok else "not decreasing to 0"
        return out

    @property
    def converges(self) -> bool:
        return all(v == "decreasing to 0" for v in self.verdicts.values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("n", "delta", "mass"))
        for r, n in enumerate(self.ns):
            for k, d in enumerate(self.deltas):
                w.writerow([n, format(float(d), ".17g"), format(float(self.masses[r, k]), ".17g")])
        return buf.getvalue()


def convergence_in_measure(mu0: DiscreteMeasure, maps, T0: MongeMap, delta_grid, ns=None) -> MeasureConvergenceTable:
    """Exact masses of the deviation sets {x : |T_n(x) - T0(x)| >= delta} under mu0."""
    deltas = np.asarray(delta_grid, dtype=float).ravel()
    ns = list(ns) if ns is not None else list(range(1, len(maps) + 1))
    if len(ns) != len(maps):
        raise ValueError("need one index per map")
    base = T0.on(mu0)
    masses = np.zeros((len(maps), deltas.size))
    for r, T in enumerate(maps):
        dev = np.sqrt(np.sum((T.on(mu0) - base) ** 2, axis=1))
        for k, d in enumerate(deltas):
            masses[r, k] = math.fsum(mu0.weights[dev >= d])
    return MeasureConvergenceTable(ns, deltas, masses)


@dataclass(frozen=True, eq=False)
class MongeScenario:
    mu0: DiscreteMeasure
    T0: MongeMap
    ns: list
    measures: list      # mu_n
    targets: list       # nu_n
    maps: list          # monotone T_n
    tv: list            # total variation between mu_n and mu0
    table: MeasureConvergenceTable


def perturbed_grid_scenario(atoms: int = 16, ns=(2, 4, 8, 16, 32, 64), deltas=(0.05, 0.1, 0.2)) -> MongeScenario:
    """Monotone maps for reweighted grids converging in variation.

    mu_n has weights (1 +- 1/n)/atoms (alternating signs) on the midpoint
    grid, so TV(mu_n, mu0) = 1/(2n); nu_n is the image of mu_n under
    S_n(x) = 2x + x/n and the cost is |x - y|^2 (1 + 1/n). T_n is the
    monotone map from mu_n to nu_n and T0(x) = 2x.
    """
    if atoms % 2:
        raise ValueError("use an even number of atoms so the perturbation keeps total mass")
    mu0 = uniform_grid_measure(atoms)
    T0 = MongeMap.from_function(mu0, lambda x: 2 * x)
    signs = np.where(np.arange(atoms) % 2 == 0, 1.0, -1.0)
    measures, targets, maps, tv = [], [], [], []
    for n in ns:
        if n < 2:
            raise ValueError("n must be >= 2 so every atom keeps positive mass")
        mu_n = make_measure(mu0.support, (1 + signs / n) / atoms)
        S_n = MongeMap.from_function(mu_n, lambda x, n=n: 2 * x + x / n)
        nu_n = pushforward(mu_n, S_n)
        T_n = monotone_map_1d(mu_n, nu_n)
        if T_n is None:
            raise AssertionError(f"n={n}: monotone map does not exist")
        cost = CostSpec.builtin("squared-shift", t=1 + 1 / n, f="identity")
        C = eval_cost(cost, mu_n, nu_n)
        if induced_coupling(mu_n, T_n).cost(C) > solve_kantorovich(mu_n, nu_n, C).value + 1e-9:
            raise AssertionError(f"n={n}: monotone map is not optimal")
        measures.append(mu_n)
        targets.append(nu_n)
        maps.append(T_n)
        tv.append(total_variation(mu_n, mu0))
    table = convergence_in_measure(mu0, maps, T0, deltas, ns)
    return MongeScenario(mu0, T0, list(ns), measures, targets, maps, tv, table)
