import numpy as np
import pytest

from paramot.measures import Coupling, CostSpec, eval_cost, uniform_grid_measure
from paramot.metrics import d_kr, direct_sum, EUCLIDEAN
from paramot.measures import coupling_to_measure
from paramot.parametric import (
    ParamFamily,
    check_plan_convergence,
    check_uniform_integrability,
    gallery,
    plan_distance,
    probe_uniqueness,
    select_eps_optimal_path,
    sweep_value,
)
from paramot.solver import enumerate_vertices, solve_kantorovich

from conftest import rand_measure


def fixed_family(mu, nu, cost_of_t, grid, envelope=None):
    return ParamFamily(np.asarray(grid, float), lambda t: mu, lambda t: nu, cost_of_t, envelope)


def diag(n):
    g = uniform_grid_measure(n)
    return Coupling(g, g, np.eye(n) / n)


def antidiag(n):
    g = uniform_grid_measure(n)
    return Coupling(g, g, np.fliplr(np.eye(n)) / n)


def test_grid_validation():
    g = uniform_grid_measure(2)
    with pytest.raises(ValueError):
        fixed_family(g, g, lambda t: CostSpec.builtin("euclidean"), [])
    with pytest.raises(ValueError):
        fixed_family(g, g, lambda t: CostSpec.builtin("euclidean"), [0.0, 0.0])


def test_constant_family():
    rng = np.random.default_rng(0)
    mu, nu = rand_measure(rng, 3), rand_measure(rng, 3)
    fam = fixed_family(mu, nu, lambda t: CostSpec.builtin("euclidean"), [0, 1, 2])
    rep = sweep_value(fam)
    assert len(rep.rows) == 3 and np.all(rep.values == rep.values[0])
    assert rep.max_plan_jump == 0.0
    conv = check_plan_convergence(fam, 2.0, side="left")
    assert np.all(conv.distances == 0)
    path = select_eps_optimal_path(fam, 0.1)
    assert path.max_plan_jump <= 1e-12


def test_gallery_a_values_vanish():
    rep = sweep_value(gallery("example-A", 8))
    assert len(rep.rows) == 101
    assert np.max(np.abs(rep.values)) <= 1e-12


def test_lipschitz_family_is_linear():
    rng = np.random.default_rng(5)
    mu, nu = rand_measure(rng, 3), rand_measure(rng, 3)
    grid = np.arange(11) / 10
    fam = fixed_family(mu, nu, lambda t: CostSpec.builtin("squared-shift", t=t), grid)
    rep = sweep_value(fam)
    C1 = eval_cost(CostSpec.builtin("squared-shift", t=1.0), mu, nu)
    K1 = enumerate_vertices(mu, nu).values(C1).min()
    np.testing.assert_allclose(rep.values, grid * K1, atol=1e-12)


def test_marginal_drift_value_bound():
    # h = |x - y| is 1-Lipschitz in each argument
    rng = np.random.default_rng(8)
    ms = [rand_measure(rng, 3) for _ in range(4)]
    fam = ParamFamily(np.array([0.0, 1.0]), lambda t: ms[int(t)], lambda t: ms[2 + int(t)],
                      lambda t: CostSpec.builtin("euclidean"))
    rep = sweep_value(fam)
    from paramot.metrics import d_kantorovich
    drift = d_kantorovich(ms[0], ms[1]) + d_kantorovich(ms[2], ms[3])
    assert abs(rep.values[1] - rep.values[0]) <= drift + 1e-8


def test_uniform_integrability_bounded():
    g = uniform_grid_measure(3)
    ones = lambda t: (np.ones(3), np.ones(3))
    fam = fixed_family(g, g, lambda t: CostSpec.builtin("truncated"), [0, 1], envelope=ones)
    rep = check_uniform_integrability(fam, [0.5, 1.0, 2.5, 3.0])
    np.testing.assert_array_equal(rep.tail_sup, [2.0, 2.0, 0.0, 0.0])
    assert rep.vanishing and rep.dominated


def test_uniform_integrability_unbounded_envelope():
    g = uniform_grid_measure(2)
    grid = [0.01, 0.1, 0.5, 1.0]
    env = lambda t: (np.array([1.0 / t, 0.0]), np.zeros(2))
    fam = fixed_family(g, g, lambda t: CostSpec.from_matrix(np.zeros((2, 2))), grid, envelope=env)
    rep = check_uniform_integrability(fam, [1.0, 10.0, 50.0])
    # the atom with a_t = 1/t carries mass 1/2, so the tail beyond R is (1/2)(1/t_min) = 50
    np.testing.assert_allclose(rep.tail_sup, [50.0, 50.0, 50.0])
    assert not rep.vanishing


def test_uniform_integrability_domination_witness():
    g = uniform_grid_measure(2)
    C = np.array([[0.0, 3.0], [0.0, 0.0]])
    env = lambda t: (np.ones(2), np.ones(2))
    fam = fixed_family(g, g, lambda t: CostSpec.from_matrix(C), [0.0], envelope=env)
    rep = check_uniform_integrability(fam, [1.0])
    assert rep.violations == [(0.0, 0, 1, 3.0, 2.0)]
    assert not rep.dominated


def test_uniform_integrability_needs_envelope():
    g = uniform_grid_measure(2)
    fam = fixed_family(g, g, lambda t: CostSpec.builtin("euclidean"), [0.0])
    with pytest.raises(ValueError):
        check_uniform_integrability(fam, [1.0])
    rep = check_uniform_integrability(fam, [1.0, 100.0], auto_envelope=True)
    assert rep.vanishing


def test_gallery_fg_branches():
    fam = gallery("example-fg", 4)
    for t, expect in ((1 / 3, diag(4)), (1 / 4, antidiag(4))):
        mu, nu, C = fam.problem(t)
        res = solve_kantorovich(mu, nu, C)
        np.testing.assert_allclose(res.plan.mass, expect.mass, atol=1e-15)
        assert probe_uniqueness(mu, nu, C)
    with pytest.raises(ValueError):
        fam.problem(0.3)


def test_gallery_a_at_zero_has_two_optima():
    fam = gallery("example-A", 4)
    mu, nu, C = fam.problem(0.0)
    assert diag(4).cost(C) == 0.0 and antidiag(4).cost(C) == 0.0
    assert not probe_uniqueness(mu, nu, C)


def test_gallery_errors():
    with pytest.raises(ValueError):
        gallery("example-B", 4)
    with pytest.raises(ValueError):
        gallery("example-A", 1)


def test_family_a_nonnegative_for_negative_t():
    fam = gallery("example-A", 8)
    for t in fam.t_grid:
        assert np.min(fam.problem(float(t))[2]) >= 0


def test_plan_convergence_gallery_a_from_right():
    fam = gallery("example-A", 4)
    rep = check_plan_convergence(fam, 0.0, side="right")
    assert np.all(rep.distances == 0)  # diagonal for every t > 0 and at t = 0
    assert rep.verdict == "inconclusive (non-unique optimum)"


def test_plan_convergence_two_sided_jump():
    fam = gallery("example-A", 4)
    rep = check_plan_convergence(fam, 0.0, side="both")
    jump = d_kr(coupling_to_measure(diag(4)), coupling_to_measure(antidiag(4)),
                direct_sum((EUCLIDEAN, 1), (EUCLIDEAN, 1)))
    assert jump > 0
    assert rep.one_sided_gap == pytest.approx(jump, abs=1e-12)


def test_plan_convergence_verdicts_on_unique_family():
    fam = gallery("example-A", 4, t_grid=[0.1, 0.2, 0.3, 0.4])
    rep = check_plan_convergence(fam, 0.1, side="right")
    assert rep.unique_at_star and rep.verdict == "consistent with weak convergence"
    # alternating branches: the plans flip between diagonal and anti-diagonal
    fam = gallery("example-fg", 4, t_grid=[1 / k for k in range(6, 0, -1)])
    rep = check_plan_convergence(fam, 1.0, side="left")
    assert rep.verdict == "non-convergent"


@pytest.mark.parametrize("seed", range(12))
def test_uniqueness_probe_routes_agree(seed):
    rng = np.random.default_rng(seed)
    mu, nu = rand_measure(rng, 4), rand_measure(rng, 3)
    # small integer costs make ties (several optima) common
    C = rng.integers(0, 3, (4, 3)).astype(float)
    assert probe_uniqueness(mu, nu, C, method="face") == probe_uniqueness(mu, nu, C, method="vertices")
    g = uniform_grid_measure(3)
    C = eval_cost(CostSpec.builtin("family-A", t=0.0), g, g)
    assert not probe_uniqueness(g, g, C, method="face") and not probe_uniqueness(g, g, C, method="vertices")


def test_eps_path_is_eps_optimal():
    fam = gallery("example-A", 6, t_grid=np.arange(-10, 11) / 100)
    eps = 0.03
    path = select_eps_optimal_path(fam, eps)
    for row in path.rows:
        mu, nu, C = fam.problem(row.t)
        assert row.plan.cost(C) <= row.value + eps + 1e-9
        assert 0.0 <= row.mix <= 1.0
    with pytest.raises(ValueError):
        select_eps_optimal_path(fam, 0.0)


def test_eps_path_large_eps_never_mixes():
    rng = np.random.default_rng(2)
    ms = [rand_measure(rng, 3) for _ in range(6)]
    fam = ParamFamily(np.arange(3.0), lambda t: ms[int(t)], lambda t: ms[3 + int(t)],
                      lambda t: CostSpec.builtin("euclidean"))
    path = select_eps_optimal_path(fam, 10.0)
    assert all(r.mix == 0.0 for r in path.rows[1:])
    from paramot.metrics import d_kantorovich
    for a, b in zip(path.rows, path.rows[1:]):
        drift = d_kantorovich(a.plan.row_measure, b.plan.row_measure) + d_kantorovich(
            a.plan.col_measure, b.plan.col_measure)
        # d_KR is dominated by d_K, which the carried plan keeps within the drift
        assert b.plan_jump_prev <= drift + 1e-8


def test_report_serialization():
    fam = gallery("example-A", 3, t_grid=[-0.1, 0.0, 0.1])
    rep = sweep_value(fam)
    lines = rep.to_csv().splitlines()
    assert lines[0] == "t,value,plan_jump_prev,eps_slack"
    assert lines[1].split(",")[0] == "-0.10000000000000001" and lines[1].split(",")[2] == ""
    assert len(lines) == 4
    import json
    doc = json.loads(rep.to_json(include_plans=True))
    assert len(doc["rows"]) == 3 and "plan" in doc["rows"][0]
    assert rep.to_json() == sweep_value(fam).to_json()


def test_parallel_sweep_matches_serial():
    fam = gallery("example-A", 5, t_grid=np.arange(-5, 6) / 10)
    assert sweep_value(fam, jobs=3).to_csv() == sweep_value(fam).to_csv()
