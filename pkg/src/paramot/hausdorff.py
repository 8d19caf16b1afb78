"""
Distances between a coupling and a transportation polytope, and Hausdorff
distances between two transportation polytopes, under the Kantorovich
distance on X x Y with ground cost alpha + beta.

Distance to a polytope is a single LP: a three-marginal transport problem
whose marginals are sigma (on its cells), mu2 and nu2. Its value is convex in
sigma, so the largest distance from a polytope is attained at a vertex, and
the exact Hausdorff distance follows from vertex enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .measures import Coupling, DiscreteMeasure
from .metrics import EUCLIDEAN, GroundCost, d_kantorovich
from .solver import CELL_CAP, enumerate_vertices, multimarginal_lp

HAUSDORFF_CELL_GUARD = 16


@dataclass(frozen=True, eq=False)
class HausdorffReport:
    exact: float | None
    upper_bound: float
    witness_pair: tuple | None = None

    @property
    def slack(self) -> float | None:
        return None if self.exact is None else self.upper_bound - self.exact


def _nearest(sigma: Coupling, mu2, nu2, alpha, beta, cap):
    m, n = sigma.shape
    A = alpha.pairwise(sigma.row_measure.support, mu2.support)  # m x m2
    B = beta.pairwise(sigma.col_measure.support, nu2.support)   # n x n2
    # cell z = (i, j) of sigma, in row-major order
    cost = A[:, None, :, None] + B[None, :, None, :]
    cost = cost.reshape(m * n, mu2.size, nu2.size)
    if cost.size > cap:
        raise ValueError(f"{cost.size} cells exceed the cap {cap}")
    gamma, value = multimarginal_lp(
        [sigma.mass.ravel(), mu2.weights, nu2.weights], cost, cap
    )
    zeta = Coupling(mu2, nu2, gamma.sum(axis=0))
    return max(value, 0.0), zeta


def dist_to_polytope(
    sigma: Coupling,
    mu2: DiscreteMeasure,
    nu2: DiscreteMeasure,
    alpha: GroundCost = EUCLIDEAN,
    beta: GroundCost = EUCLIDEAN,
    cap: int = CELL_CAP,
) -> float:
    """min over zeta in Pi(mu2, nu2) of the (alpha + beta)-Kantorovich distance to sigma."""
    return _nearest(sigma, mu2, nu2, alpha, beta, cap)[0]


def nearest_in_polytope(sigma, mu2, nu2, alpha=EUCLIDEAN, beta=EUCLIDEAN, cap=CELL_CAP):
    """Like :func:`dist_to_polytope` but also returns the minimizing coupling."""
    return _nearest(sigma, mu2, nu2, alpha, beta, cap)


def hausdorff_upper(mu1, nu1, mu2, nu2, alpha: GroundCost = EUCLIDEAN, beta: GroundCost = EUCLIDEAN) -> float:
    """d_{K,alpha}(mu1, mu2) + d_{K,beta}(nu1, nu2)."""
    return d_kantorovich(mu1, mu2, alpha) + d_kantorovich(nu1, nu2, beta)


def _one_sided(mu1, nu1, mu2, nu2, alpha, beta):
    best, witness = -1.0, None
    for v in enumerate_vertices(mu1, nu1):
        d, zeta = _nearest(v, mu2, nu2, alpha, beta, CELL_CAP)
        if d > best:
            best, witness = d, (v, zeta)
    return best, witness


def hausdorff_exact(
    mu1: DiscreteMeasure,
    nu1: DiscreteMeasure,
    mu2: DiscreteMeasure,
    nu2: DiscreteMeasure,
    alpha: GroundCost = EUCLIDEAN,
    beta: GroundCost = EUCLIDEAN,
    guard: int = HAUSDORFF_CELL_GUARD,
) -> HausdorffReport:
    """Exact Hausdorff distance between Pi(mu1, nu1) and Pi(mu2, nu2).

    Vertices are scanned in a fixed order and ties keep the first witness,
    so the report is deterministic. The witness pair is (vertex, nearest
    point of the other polytope) for the side that attains the maximum.
    """
    for a, b in ((mu1, nu1), (mu2, nu2)):
        if a.size * b.size > guard:
            raise ValueError(f"exact Hausdorff limited to {guard} cells per polytope")
    d12, w12 = _one_sided(mu1, nu1, mu2, nu2, alpha, beta)
    d21, w21 = _one_sided(mu2, nu2, mu1, nu1, alpha, beta)
    exact, witness = (d12, w12) if d12 >= d21 else (d21, w21)
    return HausdorffReport(exact, hausdorff_upper(mu1, nu1, mu2, nu2, alpha, beta), witness)
