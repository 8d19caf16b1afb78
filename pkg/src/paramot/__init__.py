"""Exact discrete optimal transport with parametric and stability diagnostics."""

from .measures import (
    Coupling,
    CostSpec,
    DiscreteMeasure,
    MultiCoupling,
    coupling_to_measure,
    dirac,
    eval_cost,
    make_measure,
    product_coupling,
    pushforward_projection,
    random_measure,
    uniform_grid_measure,
)
from .solver import SolverError, TransportResult, enumerate_vertices, solve_kantorovich
from .metrics import EUCLIDEAN, DirectSum, Euclidean, Power, Truncated, d_kantorovich, d_kr, total_variation, w_p
from .gluing import carry_plan, carry_plan_both, carry_plan_eps, carry_plan_multi, carry_plan_wp, glue
from .hausdorff import HausdorffReport, dist_to_polytope, hausdorff_exact, hausdorff_upper
from .parametric import (
    ParamFamily,
    SweepReport,
    check_plan_convergence,
    check_uniform_integrability,
    gallery,
    select_eps_optimal_path,
    sweep_value,
)
from .monge import MongeMap, convergence_in_measure, induced_coupling, monge_cost, monotone_map_1d, pushforward

__version__ = "0.1.0"
