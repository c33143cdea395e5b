"""Non-conservative optimal transport on discrete measures.

Transport plans may gain or lose mass along the way through a factor
``m(x, y)``. The package solves the resulting linear programs, certifies them
with dual potentials, extracts maps, checks particle dynamics and applies the
machinery to portfolio rebalancing on market graphs.
"""
from ._backend import BACKEND
from .duality import (
    DualAscentResult,
    DualPotentials,
    certify_duality,
    dual_ascent,
    generalized_c_transform,
    normalize_psi,
    potentials_from_lp,
    psi_transform,
    tight_support,
)
from .lp import LinearProgram, LpSolution, LpStatus, solve_lp
from .maps import (
    DualTransportMap,
    GridPotential,
    NotAMap,
    TransportMap,
    extract_dual_map_from_plan,
    extract_map_from_plan,
    map_pushforward_check,
    perturbative_map_solve,
    quadratic_leaky_map_solve,
)
from .market import (
    Cycle,
    MarketGraph,
    NoArbitrage,
    consistent_prices,
    detect_arbitrage,
    general_feasible_trade,
    optimal_rebalance,
    rebalance_edge_lp,
    rebalance_to_ncot,
)
from .solver import (
    NcotSolution,
    feasible_mass_interval,
    solve_fixed_mass,
    solve_ncot,
    sweep_mass_scales,
)
from .transport import (
    CostMatrix,
    DiscreteMeasure,
    MassChangeMatrix,
    TransportPlan,
    check_plan_feasibility,
    feasible_product_plan,
)

__version__ = "0.1.0"
