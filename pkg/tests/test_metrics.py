import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import wasserstein_distance

from paramot.measures import dirac, make_measure, random_measure
from paramot.metrics import (
    EUCLIDEAN,
    Power,
    Truncated,
    d_kantorovich,
    d_kantorovich_dual,
    d_kr,
    direct_sum,
    total_variation,
    w_p,
)
from paramot.solver import enumerate_vertices

from conftest import rand_measure


def quantile_wp(mu, nu, p):
    """W_p on the line from the quantile functions (independent of any LP)."""
    def steps(m):
        order = np.argsort(m.support[:, 0])
        return m.support[order, 0], np.cumsum(m.weights[order])
    x, F = steps(mu)
    y, G = steps(nu)
    cuts = np.unique(np.concatenate([[0.0], F, G]))
    cuts = cuts[cuts <= 1.0]
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        s = 0.5 * (lo + hi)
        qx = x[min(np.searchsorted(F, s), len(x) - 1)]
        qy = y[min(np.searchsorted(G, s), len(y) - 1)]
        total += (hi - lo) * abs(qx - qy) ** p
    return total ** (1 / p)


def test_self_distances_vanish():
    m = random_measure(4, 2, seed=2)
    assert d_kantorovich(m, m) == 0.0
    assert d_kr(m, m) == 0.0
    assert w_p(m, m, 2) == 0.0


@pytest.mark.parametrize("a, b", [(0.0, 0.3), (0.0, 1.7), (0.0, 5.0)])
def test_dirac_distances(a, b):
    x, y = dirac([a]), dirac([b])
    assert d_kantorovich(x, y) == pytest.approx(abs(a - b))
    assert d_kr(x, y) == pytest.approx(min(abs(a - b), 2.0))
    assert w_p(x, y, 2) == pytest.approx(abs(a - b))


def test_w2_unit_diracs():
    assert w_p(dirac([0.0]), dirac([1.0]), 2) == pytest.approx(1.0)


def test_d_k_seed11_matches_vertex_oracle():
    rng = np.random.default_rng(11)
    mu, nu = rand_measure(rng, 3), rand_measure(rng, 3)
    C = np.abs(mu.support[:, None, 0] - nu.support[None, :, 0])
    assert abs(d_kantorovich(mu, nu) - enumerate_vertices(mu, nu).values(C).min()) <= 1e-9


def test_sandwich_seed13():
    rng = np.random.default_rng(13)
    mu, nu = rand_measure(rng, 4, 2), rand_measure(rng, 3, 2)
    dt = d_kantorovich(mu, nu, Truncated())
    assert 0.5 * dt - 1e-9 <= d_kr(mu, nu) <= 2 * dt + 1e-9


@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(1, 6))
def test_one_dimensional_values_match_scipy_and_quantiles(seed, m, n):
    rng = np.random.default_rng(seed)
    mu, nu = rand_measure(rng, m), rand_measure(rng, n)
    ref = wasserstein_distance(mu.support[:, 0], nu.support[:, 0], mu.weights, nu.weights)
    assert abs(d_kantorovich(mu, nu) - ref) <= 1e-9
    assert abs(w_p(mu, nu, 1) - ref) <= 1e-9
    assert abs(w_p(mu, nu, 2) - quantile_wp(mu, nu, 2)) <= 1e-9


@given(st.integers(0, 10**6))
def test_primal_equals_dual(seed):
    rng = np.random.default_rng(seed)
    dim = int(rng.integers(1, 3))
    mu, nu = rand_measure(rng, int(rng.integers(1, 5)), dim), rand_measure(rng, int(rng.integers(1, 5)), dim)
    assert abs(d_kantorovich(mu, nu) - d_kantorovich_dual(mu, nu)) <= 1e-8


@given(st.integers(0, 10**6))
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (rand_measure(rng, int(rng.integers(1, 4)), 2) for _ in range(3))
    for d in (d_kantorovich, d_kr, lambda u, v: w_p(u, v, 1), lambda u, v: w_p(u, v, 2)):
        assert d(a, b) == d(b, a) or abs(d(a, b) - d(b, a)) <= 1e-12
        assert d(a, c) <= d(a, b) + d(b, c) + 1e-9
        assert d(a, b) > 1e-9  # distinct random measures


def test_identity_of_indiscernibles_after_merge():
    a = make_measure([[0.0], [0.0], [1.0]], [1, 1, 2])
    b = make_measure([[1.0], [0.0]], [1, 1])
    assert d_kantorovich(a, b) < 1e-9 and d_kr(a, b) < 1e-9 and total_variation(a, b) < 1e-12


@given(st.integers(0, 10**6))
def test_wp_nondecreasing_in_p(seed):
    rng = np.random.default_rng(seed)
    mu, nu = rand_measure(rng, 3, 2), rand_measure(rng, 4, 2)
    vals = [w_p(mu, nu, p) for p in (1, 1.5, 2, 3)]
    assert all(x <= y + 1e-9 for x, y in zip(vals, vals[1:]))


def test_wp_rejects_small_p():
    with pytest.raises(ValueError):
        w_p(dirac([0.0]), dirac([1.0]), 0.5)
    with pytest.raises(ValueError):
        Power(0.5)


def test_direct_sum_ground():
    g = direct_sum((EUCLIDEAN, 1), (Truncated(), 2))
    assert g([0.0, 0.0, 0.0], [3.0, 3.0, 4.0]) == pytest.approx(3.0 + 1.0)
    assert g.is_metric and not Power(2).is_metric
    with pytest.raises(ValueError):
        g([0.0, 0.0], [1.0, 1.0])


def test_total_variation():
    a = make_measure([[0.0], [1.0]], [0.5, 0.5])
    b = make_measure([[1.0], [2.0]], [0.5, 0.5])
    assert total_variation(a, b) == pytest.approx(0.5)
