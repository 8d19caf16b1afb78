"""
Gluing of couplings and transport of a plan to new marginals.

Given sigma1 in Pi(mu1, nu) and an optimal plan eta in Pi(mu1, mu2), gluing
eta and sigma1 along their shared factor X and projecting onto X2 x Y gives
sigma2 in Pi(mu2, nu) whose distance to sigma1 (under alpha + beta on
X x Y) is at most the alpha-transport cost between mu1 and mu2. Every carry
function returns the computed distance (``lhs``) next to that bound
(``rhs``) so callers can check the inequality.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .measures import (
    DROP_TOL,
    MARGINAL_TOL,
    MERGE_TOL,
    Coupling,
    DiscreteMeasure,
    MultiCoupling,
    coupling_to_measure,
    pushforward_projection,
)
from .metrics import EUCLIDEAN, DirectSum, GroundCost, Power
from .solver import CELL_CAP, solve_kantorovich


class CarryResult(NamedTuple):
    plan: object
    lhs: float
    rhs: float


def _glue_mass(a12: np.ndarray, a23: np.ndarray) -> np.ndarray:
    """lambda[i, j, k] = a12[i, j] * a23[j, k] / m2[j] with m2 the row sums of a23."""
    m2 = a23.sum(axis=1)
    cond = np.zeros_like(a23)
    live = m2 > DROP_TOL
    cond[live] = a23[live] / m2[live, None]
    return a12[:, :, None] * cond[None, :, :]


def _same_atoms(a: DiscreteMeasure, b: DiscreteMeasure) -> bool:
    return a.support.shape == b.support.shape and bool(
        np.all(np.abs(a.support - b.support) < MERGE_TOL)
    )


def glue(c12: Coupling, c23: Coupling) -> MultiCoupling:
    """Glue couplings on X1 x X2 and X2 x X3 along X2.

    The result lambda on X1 x X2 x X3 makes X1 and X3 conditionally
    independent given X2; its (0, 1) and (1, 2) projections are c12 and c23.
    Middle atoms of mass <= 1e-14 carry no mass.
    """
    mid_a, mid_b = c12.col_measure, c23.row_measure
    if not _same_atoms(mid_a, mid_b):
        raise ValueError("couplings do not share the middle support")
    s12 = c12.mass.sum(axis=0)
    r23 = c23.mass.sum(axis=1)
    if np.max(np.abs(s12 - r23)) > MARGINAL_TOL:
        raise ValueError(f"middle marginals differ by {np.max(np.abs(s12 - r23)):.3e}")
    lam = _glue_mass(c12.mass, c23.mass)
    return MultiCoupling((c12.row_measure, mid_a, c23.col_measure), lam)


def coupling_distance(c1, c2, ground: GroundCost, cap: int = CELL_CAP) -> float:
    """Transport cost between two couplings viewed as measures on the product space."""
    a, b = coupling_to_measure(c1), coupling_to_measure(c2)
    if a.size * b.size > cap:
        raise ValueError(f"{a.size}x{b.size} transport exceeds the cell cap {cap}")
    C = ground.pairwise(a.support, b.support)
    return solve_kantorovich(a, b, C).value


def _block_ground(parts, margs) -> DirectSum:
    return DirectSum(tuple(parts), tuple(m.dim for m in margs))


def _optimal_link(mu1: DiscreteMeasure, mu2: DiscreteMeasure, C: np.ndarray) -> Coupling:
    # identical marginals: the diagonal plan costs nothing and keeps sigma unchanged
    if _same_atoms(mu1, mu2) and np.max(np.abs(mu1.weights - mu2.weights)) <= 1e-12:
        return Coupling(mu1, mu2, np.diag(mu1.weights))
    return solve_kantorovich(mu1, mu2, C).plan


def _carry_rows(sigma1: Coupling, eta: Coupling) -> Coupling:
    """Move the row marginal of sigma1 along eta (a plan from sigma1's rows to new atoms)."""
    lam = glue(eta.transpose(), sigma1)  # X2 x X1 x Y
    return pushforward_projection(lam, (0, 2))


def carry_plan(
    sigma1: Coupling,
    mu2: DiscreteMeasure,
    alpha: GroundCost = EUCLIDEAN,
    beta: GroundCost = EUCLIDEAN,
) -> CarryResult:
    """Carry sigma1 in Pi(mu1, nu) to Pi(mu2, nu).

    Returns ``(sigma2, lhs, rhs)`` with lhs the (alpha + beta)-transport
    cost between sigma1 and sigma2 and rhs the alpha-transport cost between
    mu1 and mu2; lhs <= rhs holds for any cost alpha >= 0 and beta vanishing
    on the diagonal.
    """
    mu1 = sigma1.row_measure
    if mu1.dim != mu2.dim:
        raise ValueError(f"dimension mismatch: {mu1.dim} vs {mu2.dim}")
    C = alpha.pairwise(mu1.support, mu2.support)
    eta = _optimal_link(mu1, mu2, C)
    sigma2 = _carry_rows(sigma1, eta)
    rhs = eta.cost(C)
    lhs = coupling_distance(sigma1, sigma2, _block_ground((alpha, beta), sigma1.marginals))
    return CarryResult(sigma2, lhs, rhs)


def carry_plan_eps(
    sigma1: Coupling,
    mu2: DiscreteMeasure,
    alpha: GroundCost = EUCLIDEAN,
    beta: GroundCost = EUCLIDEAN,
    eps: float = 0.0,
    eta: Coupling | None = None,
) -> CarryResult:
    """Like :func:`carry_plan` but glued along a supplied eps-optimal plan ``eta``.

    ``eta`` must lie in Pi(mu1, mu2) and cost at most the optimum plus eps;
    otherwise ValueError. The returned rhs is the optimum plus eps.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    mu1 = sigma1.row_measure
    C = alpha.pairwise(mu1.support, mu2.support)
    opt = solve_kantorovich(mu1, mu2, C).value
    if eta is None:
        eta = _optimal_link(mu1, mu2, C)
    if not (_same_atoms(eta.row_measure, mu1) and _same_atoms(eta.col_measure, mu2)):
        raise ValueError("eta must couple the row marginal of sigma1 with mu2")
    excess = eta.cost(C) - opt
    if excess > eps + 1e-12:
        raise ValueError(f"eta is not eps-optimal: excess {excess:.6g} > eps {eps:.6g}")
    sigma2 = _carry_rows(sigma1, eta)
    lhs = coupling_distance(sigma1, sigma2, _block_ground((alpha, beta), sigma1.marginals))
    return CarryResult(sigma2, lhs, opt + eps)


def carry_plan_both(
    sigma1: Coupling,
    mu2: DiscreteMeasure,
    nu2: DiscreteMeasure,
    alpha: GroundCost = EUCLIDEAN,
    beta: GroundCost = EUCLIDEAN,
) -> CarryResult:
    """Carry sigma1 in Pi(mu1, nu1) to Pi(mu2, nu2): first along X, then along Y.

    rhs is d_{K,alpha}(mu1, mu2) + d_{K,beta}(nu1, nu2); lhs is the
    (alpha + beta)-distance between sigma1 and the result.
    """
    mu1, nu1 = sigma1.row_measure, sigma1.col_measure
    Cx = alpha.pairwise(mu1.support, mu2.support)
    eta_x = _optimal_link(mu1, mu2, Cx)
    sigma2 = _carry_rows(sigma1, eta_x)
    Cy = beta.pairwise(nu1.support, nu2.support)
    eta_y = _optimal_link(nu1, nu2, Cy)
    sigma3 = _carry_rows(sigma2.transpose(), eta_y).transpose()
    rhs = eta_x.cost(Cx) + eta_y.cost(Cy)
    lhs = coupling_distance(sigma1, sigma3, _block_ground((alpha, beta), sigma1.marginals))
    return CarryResult(sigma3, lhs, rhs)


def carry_plan_wp(
    sigma1: Coupling,
    mu2: DiscreteMeasure,
    nu2: DiscreteMeasure,
    p: float,
    ground: GroundCost = EUCLIDEAN,
) -> CarryResult:
    """W_p version of :func:`carry_plan_both`.

    The product space carries the sum metric d_X + d_Y, so lhs is
    W_p(sigma1, sigma2) under that metric and rhs is
    W_p(mu1, mu2) + W_p(nu1, nu2).
    """
    if p < 1:
        raise ValueError("p must be >= 1")
    mu1, nu1 = sigma1.row_measure, sigma1.col_measure
    Cx = ground.pairwise(mu1.support, mu2.support) ** p
    eta_x = _optimal_link(mu1, mu2, Cx)
    sigma2 = _carry_rows(sigma1, eta_x)
    Cy = ground.pairwise(nu1.support, nu2.support) ** p
    eta_y = _optimal_link(nu1, nu2, Cy)
    sigma3 = _carry_rows(sigma2.transpose(), eta_y).transpose()
    rhs = max(eta_x.cost(Cx), 0.0) ** (1 / p) + max(eta_y.cost(Cy), 0.0) ** (1 / p)
    prod = Power(p, _block_ground((ground, ground), sigma1.marginals))
    lhs = max(coupling_distance(sigma1, sigma3, prod), 0.0) ** (1 / p)
    return CarryResult(sigma3, lhs, rhs)


def carry_plan_multi(
    sigma: MultiCoupling,
    new_marginals: list,
    alphas: list | None = None,
    order: list | None = None,
    cap: int = CELL_CAP,
) -> CarryResult:
    """Replace every marginal of a k-coupling, one axis at a time.

    At step i the coupling is viewed as a plan between axis i and the block
    of all remaining axes, and axis i is carried to ``new_marginals[i]``.
    ``order`` fixes the sequence of axes (ascending by default); it can
    change the resulting plan but not the bound.
    """
    k = sigma.k
    if len(new_marginals) != k:
        raise ValueError(f"expected {k} new marginals, got {len(new_marginals)}")
    if k > 4:
        raise ValueError("at most 4 marginals are supported")
    alphas = list(alphas) if alphas is not None else [EUCLIDEAN] * k
    order = list(order) if order is not None else list(range(k))
    if sorted(order) != list(range(k)):
        raise ValueError("order must be a permutation of the axes")
    if int(np.prod([m.size for m in new_marginals])) > cap:
        raise ValueError("new marginals exceed the cell cap")

    margs = list(sigma.marginals)
    mass = np.array(sigma.mass)
    rhs = 0.0
    for i in order:
        old, new = margs[i], new_marginals[i]
        if old.dim != new.dim:
            raise ValueError(f"axis {i}: dimension mismatch")
        C = alphas[i].pairwise(old.support, new.support)
        eta = _optimal_link(old, new, C)
        rhs += eta.cost(C)
        front = np.moveaxis(mass, i, 0)
        rest_shape = front.shape[1:]
        lam = _glue_mass(eta.mass.T, front.reshape(old.size, -1))
        moved = lam.sum(axis=1).reshape((new.size,) + rest_shape)
        mass = np.moveaxis(moved, 0, i)
        margs[i] = new
    pi = MultiCoupling(tuple(margs), mass)
    ground = _block_ground(alphas, sigma.marginals)
    lhs = coupling_distance(pi, sigma, ground, cap)
    return CarryResult(pi, lhs, rhs)
