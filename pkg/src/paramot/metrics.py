"""
Distances between discrete measures.

d_K   Kantorovich: optimal transport cost with the ground metric as cost.
d_KR  Kantorovich-Rubinshtein (Fortet-Mourier): sup of the integral of f
      against mu - nu over 1-Lipschitz f with |f| <= 1.
W_p   p-Kantorovich: (transport cost under d^p)^(1/p).

Ground costs on product spaces are direct sums, i.e. the l1 combination
alpha(x, x') + beta(y, y') of the factor costs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .measures import MERGE_TOL, DiscreteMeasure, pairwise_distance
from .solver import lp_minimize, solve_kantorovich


class GroundCost:
    """Symmetric nonnegative cost on R^d vanishing on the diagonal."""

    is_metric = True

    def pairwise(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x, y) -> float:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        y = np.atleast_2d(np.asarray(y, dtype=float))
        return float(self.pairwise(x, y)[0, 0])


@dataclass(frozen=True)
class Euclidean(GroundCost):
    def pairwise(self, X, Y):
        return pairwise_distance(X, Y)


@dataclass(frozen=True)
class Truncated(GroundCost):
    """min(base, 1); a bounded metric with the same topology as base."""

    base: GroundCost = Euclidean()

    def pairwise(self, X, Y):
        return np.minimum(self.base.pairwise(X, Y), 1.0)


@dataclass(frozen=True)
class Power(GroundCost):
    """base ** p. Not a metric for p > 1; used for W_p."""

    p: float = 1.0
    base: GroundCost = Euclidean()

    def __post_init__(self):
        if self.p < 1:
            raise ValueError("power ground cost needs p >= 1")

    @property
    def is_metric(self):
        return self.p == 1 and self.base.is_metric

    def pairwise(self, X, Y):
        return self.base.pairwise(X, Y) ** self.p


@dataclass(frozen=True)
class DirectSum(GroundCost):
    """Sum of factor costs on a product space R^{d_1} x ... x R^{d_k}.

    Points are the concatenation of their factor coordinates; ``dims`` gives
    the length of each block.
    """

    parts: tuple
    dims: tuple

    def __post_init__(self):
        if len(self.parts) != len(self.dims) or not self.parts:
            raise ValueError("DirectSum needs one dimension per part")

    @property
    def is_metric(self):
        return all(p.is_metric for p in self.parts)

    def pairwise(self, X, Y):
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        if X.shape[1] != sum(self.dims) or Y.shape[1] != sum(self.dims):
            raise ValueError(f"points must have dimension {sum(self.dims)}")
        out = np.zeros((X.shape[0], Y.shape[0]))
        lo = 0
        for part, d in zip(self.parts, self.dims):
            out += part.pairwise(X[:, lo:lo + d], Y[:, lo:lo + d])
            lo += d
        return out


def direct_sum(*pairs) -> DirectSum:
    """``direct_sum((alpha, d_x), (beta, d_y), ...)``."""
    return DirectSum(tuple(p for p, _ in pairs), tuple(int(d) for _, d in pairs))


EUCLIDEAN = Euclidean()


def ground_matrix(mu: DiscreteMeasure, nu: DiscreteMeasure, ground: GroundCost) -> np.ndarray:
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    return ground.pairwise(mu.support, nu.support)


def d_kantorovich(mu: DiscreteMeasure, nu: DiscreteMeasure, ground: GroundCost = EUCLIDEAN) -> float:
    """Kantorovich distance, computed as the optimal transport cost."""
    return solve_kantorovich(mu, nu, ground_matrix(mu, nu, ground)).value


def w_p(mu: DiscreteMeasure, nu: DiscreteMeasure, p: float, ground: GroundCost = EUCLIDEAN) -> float:
    if p < 1:
        raise ValueError("W_p needs p >= 1")
    C = ground_matrix(mu, nu, ground) ** p
    value = solve_kantorovich(mu, nu, C).value
    return max(value, 0.0) ** (1.0 / p)


def _signed_union(mu: DiscreteMeasure, nu: DiscreteMeasure):
    """Atoms of supp(mu) U supp(nu) and the weights of mu - nu on them."""
    pts = [x for x in mu.support]
    w = list(mu.weights)
    for y, wy in zip(nu.support, nu.weights):
        for k, x in enumerate(pts):
            if np.max(np.abs(x - y)) < MERGE_TOL:
                w[k] -= wy
                break
        else:
            pts.append(y)
            w.append(-wy)
    return np.array(pts), np.array(w)


def _lipschitz_lp(Z: np.ndarray, w: np.ndarray, D: np.ndarray, bounds) -> float:
    N = Z.shape[0]
    if N == 1:
        return 0.0
    rows, rhs = [], []
    for a in range(N):
        for b in range(N):
            if a != b:
                r = np.zeros(N)
                r[a], r[b] = 1.0, -1.0
                rows.append(r)
                rhs.append(D[a, b])
    _, val = lp_minimize(-w, A_ub=np.array(rows), b_ub=np.array(rhs), bounds=bounds)
    return -val


def d_kr(mu: DiscreteMeasure, nu: DiscreteMeasure, ground: GroundCost = EUCLIDEAN) -> float:
    """Kantorovich-Rubinshtein distance as an LP over potentials on the joint support.

    Maximizes sum f(z) (mu - nu)(z) subject to |f| <= 1 and
    f(z) - f(z') <= d(z, z') for every ordered pair of atoms.
    """
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    Z, w = _signed_union(mu, nu)
    # adding 0.0 turns a -0.0 from the LP into +0.0
    return max(_lipschitz_lp(Z, w, ground.pairwise(Z, Z), [(-1.0, 1.0)] * len(w)), 0.0) + 0.0


def d_kantorovich_dual(mu: DiscreteMeasure, nu: DiscreteMeasure, ground: GroundCost = EUCLIDEAN) -> float:
    """Kantorovich distance from the Lipschitz-potential side.

    Same LP as :func:`d_kr` without the bound on |f|; the potential is pinned
    to 0 at the first atom of mu. Agrees with :func:`d_kantorovich` whenever
    the ground cost is a metric.
    """
    if mu.dim != nu.dim:
        raise ValueError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    Z, w = _signed_union(mu, nu)
    bounds = [(0.0, 0.0)] + [(None, None)] * (len(w) - 1)
    return max(_lipschitz_lp(Z, w, ground.pairwise(Z, Z), bounds), 0.0) + 0.0


def total_variation(mu: DiscreteMeasure, nu: DiscreteMeasure) -> float:
    """Half the l1 distance between weight vectors on the union of supports."""
    _, w = _signed_union(mu, nu)
    return 0.5 * math.fsum(np.abs(w))
