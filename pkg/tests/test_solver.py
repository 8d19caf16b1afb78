import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import linear_sum_assignment, linprog

from paramot.measures import (
    CostSpec,
    dirac,
    eval_cost,
    make_measure,
    product_coupling,
    random_measure,
    uniform_grid_measure,
)
from paramot.solver import (
    enumerate_vertices,
    is_optimal,
    multimarginal_vertex_oracle,
    solve_kantorovich,
    solve_multimarginal,
)

from conftest import rand_measure


def check_result(res, C):
    """Every certificate a TransportResult promises."""
    P = res.plan.mass
    assert abs(res.value - float(np.sum(C * P))) <= 1e-10 * max(1.0, abs(res.value))
    slack = C - res.dual_u[:, None] - res.dual_v[None, :]
    assert np.all(slack >= -1e-8)
    assert np.all(np.abs(slack[P > 1e-10]) <= 1e-8)
    assert res.duality_gap() <= 1e-8
    rows, cols = res.plan.marginal_residuals()
    assert rows <= 1e-9 and cols <= 1e-9


def scipy_transport_value(mu, nu, C):
    # independent route: the dense LP in scipy's interior-point solver
    m, n = C.shape
    A = np.zeros((m + n, m * n))
    for i in range(m):
        A[i, i * n:(i + 1) * n] = 1
    for j in range(n):
        A[m + j, j::n] = 1
    b = np.concatenate([mu.weights, nu.weights])
    res = linprog(C.ravel(), A_eq=A, b_eq=b, method="highs-ipm")
    assert res.status == 0
    return res.fun


def test_dirac_pair():
    res = solve_kantorovich(dirac([0.0]), dirac([1.0]), [[2.5]])
    assert res.value == 2.5 and res.plan.mass.tolist() == [[1.0]]


def test_zero_cost():
    mu, nu = random_measure(4, seed=1), random_measure(3, seed=2)
    res = solve_kantorovich(mu, nu, np.zeros((4, 3)))
    assert res.value == 0.0
    check_result(res, np.zeros((4, 3)))


def test_family_a_positive_t_gives_diagonal():
    g = uniform_grid_measure(4)
    C = eval_cost(CostSpec.builtin("family-A", t=0.25), g, g)
    res = solve_kantorovich(g, g, C)
    assert res.value == 0.0
    np.testing.assert_array_equal(res.plan.mass, np.eye(4) / 4)


def test_random_3x3_seed7_matches_vertices():
    rng = np.random.default_rng(7)
    mu, nu = rand_measure(rng, 3), rand_measure(rng, 3)
    C = rng.random((3, 3))
    res = solve_kantorovich(mu, nu, C)
    assert abs(res.value - enumerate_vertices(mu, nu).values(C).min()) <= 1e-9
    check_result(res, C)


@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(1, 6), st.booleans())
def test_simplex_matches_independent_lp(seed, m, n, integer_costs):
    rng = np.random.default_rng(seed)
    mu, nu = rand_measure(rng, m), rand_measure(rng, n)
    C = rng.integers(0, 3, (m, n)).astype(float) if integer_costs else rng.random((m, n))
    res = solve_kantorovich(mu, nu, C)
    check_result(res, C)
    assert abs(res.value - scipy_transport_value(mu, nu, C)) <= 1e-8


@given(st.integers(0, 10**6), st.integers(2, 7))
def test_uniform_square_problem_matches_assignment(seed, n):
    # with uniform equal-size marginals the optimum is a permutation (assignment problem)
    rng = np.random.default_rng(seed)
    g = uniform_grid_measure(n)
    C = rng.integers(0, 5, (n, n)).astype(float)
    r, c = linear_sum_assignment(C)
    res = solve_kantorovich(g, g, C)
    assert abs(res.value - C[r, c].sum() / n) <= 1e-12
    check_result(res, C)


def test_solver_is_deterministic():
    rng = np.random.default_rng(3)
    mu, nu = rand_measure(rng, 5), rand_measure(rng, 4)
    C = rng.integers(0, 2, (5, 4)).astype(float)
    a, b = solve_kantorovich(mu, nu, C), solve_kantorovich(mu, nu, C)
    assert a.plan.mass.tobytes() == b.plan.mass.tobytes()
    assert a.dual_u.tobytes() == b.dual_u.tobytes()


def test_degenerate_marginals():
    # equal partial sums force zero-flow basic cells
    mu = make_measure([[0], [1], [2], [3]], [1, 1, 1, 1])
    nu = make_measure([[0], [1]], [1, 1])
    for C in (np.zeros((4, 2)), np.array([[1, 0], [0, 1], [1, 0], [0, 1.0]])):
        check_result(solve_kantorovich(mu, nu, C), C)


def test_invalid_costs_rejected():
    mu = uniform_grid_measure(2)
    for C in ([[1.0]], [[1.0, -1.0], [0.0, 0.0]], [[np.nan, 0], [0, 0]]):
        with pytest.raises(ValueError):
            solve_kantorovich(mu, mu, C)


@given(st.integers(0, 10**6))
def test_value_monotone_and_stable(seed):
    rng = np.random.default_rng(seed)
    mu, nu = rand_measure(rng, 3), rand_measure(rng, 4)
    C = rng.random((3, 4))
    D = C + rng.random((3, 4)) * 0.3
    E = np.abs(C + rng.normal(0, 0.1, (3, 4)))
    vc, vd, ve = (solve_kantorovich(mu, nu, X).value for X in (C, D, E))
    assert vc <= vd + 1e-10
    assert abs(vc - ve) <= np.max(np.abs(C - E)) + 1e-12


def test_vertex_counts():
    one = enumerate_vertices(dirac([0.0]), dirac([1.0]))
    assert len(one) == 1 and one.vertices[0].mass.tolist() == [[1.0]]
    for n in (2, 3, 4):
        g = uniform_grid_measure(n)
        verts = enumerate_vertices(g, g)
        # Birkhoff polytope: the vertices are the n! permutation matrices
        assert len(verts) == math.factorial(n)
        for v in verts:
            P = v.mass * n
            assert np.array_equal(P, np.round(P)) and np.all(P.sum(axis=0) == 1)


@given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 4))
def test_pivot_and_tree_enumeration_agree(seed, m, n):
    rng = np.random.default_rng(seed)
    mu, nu = rand_measure(rng, m), rand_measure(rng, n)
    a = sorted(tuple(np.round(v.mass.ravel(), 9)) for v in enumerate_vertices(mu, nu, "pivot"))
    b = sorted(tuple(np.round(v.mass.ravel(), 9)) for v in enumerate_vertices(mu, nu, "trees"))
    assert a == b
    for v in enumerate_vertices(mu, nu):
        assert np.sum(v.mass > 1e-10) <= m + n - 1


def test_vertex_guard():
    g = uniform_grid_measure(7)
    with pytest.raises(ValueError):
        enumerate_vertices(g, g)


def test_is_optimal():
    g = uniform_grid_measure(4)
    C = eval_cost(CostSpec.builtin("family-A", t=0.25), g, g)
    assert is_optimal(solve_kantorovich(g, g, C).plan, C, 1e-9)
    assert not is_optimal(product_coupling(g, g), C, 1e-3)
    assert is_optimal(product_coupling(g, g), np.zeros((4, 4)))


def test_multimarginal_reduces_to_two_marginals():
    rng = np.random.default_rng(4)
    mu, nu = rand_measure(rng, 3), rand_measure(rng, 4)
    C = rng.random((3, 4))
    _, v = solve_multimarginal([mu, nu], C)
    assert abs(v - solve_kantorovich(mu, nu, C).value) <= 1e-9


def test_multimarginal_diracs():
    ms = [dirac([0.0]), dirac([1.0]), dirac([2.0])]
    plan, v = solve_multimarginal(ms, np.array([[[3.5]]]))
    assert v == 3.5 and plan.mass.shape == (1, 1, 1)


def test_multimarginal_2x2x2_seed3_matches_vertex_oracle():
    rng = np.random.default_rng(3)
    ms = [rand_measure(rng, 2) for _ in range(3)]
    C = rng.random((2, 2, 2))
    plan, v = solve_multimarginal(ms, C)
    assert abs(v - multimarginal_vertex_oracle([m.weights for m in ms], C)) <= 1e-9
    for ax in range(3):
        others = tuple(a for a in range(3) if a != ax)
        assert np.max(np.abs(plan.mass.sum(axis=others) - ms[ax].weights)) <= 1e-9


def test_multimarginal_cap():
    ms = [uniform_grid_measure(10)] * 3
    with pytest.raises(ValueError):
        solve_multimarginal(ms, np.zeros((10, 10, 10)), cap=999)
