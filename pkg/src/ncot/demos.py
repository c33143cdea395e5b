"""Seeded demo instances shared by the command line and the test-suite.

Everything here is deterministic for a given seed.
"""
import math

import numpy as np

from .duality import potentials_from_lp
from .dynamics import (
    FlowField,
    PiecewiseLinearFlow,
    exponential_mass,
    jensen_lower_bound_check,
    kinetic_cost,
    mass_balance_check,
    uniform_time_grid,
)
from .maps import (
    GridPotential,
    extract_dual_map_from_plan,
    extract_map_from_plan,
    map_pushforward_check,
    quadratic_leaky_map_solve,
)
from .market import MarketGraph
from .solver import solve_ncot

# three target atoms used by the 1D leaky map demo
LEAKY_TARGETS = np.array([0.2, 0.55, 0.85])
LEAKY_TARGET_WEIGHTS = np.array([0.3, 0.45, 0.25])


def northwest_corner(mu, nu):
    """Monotone (comonotone) coupling of two 1D measures on sorted supports."""
    p = np.zeros((len(mu), len(nu)))
    a = np.array(mu, dtype=float)
    b = np.array(nu, dtype=float)
    i = j = 0
    while i < len(a) and j < len(b):
        t = min(a[i], b[j])
        p[i, j] += t
        a[i] -= t
        b[j] -= t
        if a[i] <= 1e-15:
            i += 1
        else:
            j += 1
    return p


def leaky_grid_instance(k, grid_size=64):
    """Cell-centred grid on [0, 1] with a sinusoidal density, sent to three atoms.

    Cost is ``|x-y|^2 / 2`` and the mass factor ``1 - k |x-y|^2 / 2``.
    Returns ``(x, mu, y, nu, cost, mass)``.
    """
    x = (np.arange(grid_size) + 0.5) / grid_size
    dens = 1.0 + 0.5 * np.sin(2 * np.pi * x)
    mu = dens / dens.sum()
    y = LEAKY_TARGETS.copy()
    nu = LEAKY_TARGET_WEIGHTS.copy()
    sq = (x[:, None] - y[None, :]) ** 2
    return x, mu, y, nu, 0.5 * sq, 1.0 - 0.5 * k * sq


def leaky_map_report(k, grid_size=64, max_exceptions=2):
    """Solve the 1D quadratic leaky problem and compare three views of the map.

    * the plan map (argmax per row, at most ``max_exceptions`` split rows),
    * the pointwise characteristic-equation solve from the dual potential,
    * the classical monotone map (barycentres of the northwest-corner plan).
    """
    x, mu, y, nu, c, m = leaky_grid_instance(k, grid_size)
    h = 1.0 / grid_size
    sol = solve_ncot(mu, nu, c, m)
    tmap = extract_map_from_plan(sol.plan, max_exceptions=max_exceptions)
    out = {"k": float(k), "grid_size": int(grid_size), "value": sol.optimal_value,
           "retained_mass": sol.retained_mass}
    if not tmap:
        out.update(is_map=False, split_rows=list(tmap.indices))
        return out
    pot = potentials_from_lp(sol, c, m, nu)
    grad = GridPotential.from_values(x, pot.phi, pieces=tmap.assignment).flat_gradient()
    mismatch = 0.0
    checked = 0
    char_targets = np.full(grid_size, np.nan)
    for i in range(grid_size):
        if i in tmap.exceptions or not np.isfinite(grad[i, 0]):
            continue
        yy = quadratic_leaky_map_solve(x[i], pot.phi[i], grad[i], k)
        char_targets[i] = yy[0]
        mismatch = max(mismatch, abs(yy[0] - y[tmap.assignment[i]]))
        checked += 1
    push = map_pushforward_check(tmap, mu, nu, m)
    bary = (sol.plan.entries @ y) / mu
    classical = (northwest_corner(mu, nu) @ y) / mu
    out.update(
        is_map=True,
        exceptions=list(tmap.exceptions),
        assignment=tmap.assignment.tolist(),
        characteristic_targets=char_targets,
        characteristic_checked=checked,
        characteristic_mismatch=mismatch,
        within_one_cell=bool(mismatch <= h),
        pushforward_deviation=push.deviation,
        sup_distance_to_classical=float(np.abs(bary - classical).max()),
    )
    return out


def dynamics_instance(seed=3, n=8, k=0.5):
    """Ordered 1D particles shifted right, with exponential mass decay.

    The target weights are chosen so that the order-preserving pairing is
    the unique optimal plan. Returns ``(x, mu, y, nu, cost, mass, mass_fn)``.
    """
    rng = np.random.default_rng(seed)
    x = np.sort(rng.random(n)) * 0.6
    y = np.sort(x + 0.3 + 0.05 * rng.random(n))
    mu = rng.random(n) + 0.5
    mu /= mu.sum()
    mass_fn = exponential_mass(k)
    nu = mu * mass_fn[0](x[:, None], y[:, None])
    nu /= nu.sum()
    d = np.abs(x[:, None] - y[None, :])
    return x, mu, y, nu, d ** 2, np.exp(-0.5 * k * d ** 2), mass_fn


def dynamics_report(seed=3, n=8, k=0.5, steps=(32, 64, 128), detour_offset=0.05):
    """Static value, straight-line cost, detour cost and mass-balance residuals."""
    x, mu, y, nu, c, m, mass_fn = dynamics_instance(seed, n, k)
    sol = solve_ncot(mu, nu, c, m)
    tmap = extract_map_from_plan(sol.plan)
    if not tmap:
        return {"is_map": False, "split_rows": list(tmap.indices), "value": sol.optimal_value}
    flow = FlowField.from_map(tmap, x, y)
    kin = kinetic_cost(flow, mu)
    detour = jensen_lower_bound_check(
        PiecewiseLinearFlow.detour(flow, detour_offset), mu, sol.optimal_value,
        nu=nu, target_points=y, mass_fn=mass_fn,
    )
    residuals = [
        mass_balance_check(flow.with_time_grid(uniform_time_grid(s)), mu, mass_fn).max_residual
        for s in steps
    ]
    dual = extract_dual_map_from_plan(sol.plan, m, nu)
    composed = bool(dual) and all(
        dual.assignment[tmap.assignment[i]] == i for i in range(n) if tmap.assignment[i] >= 0
    )
    return {
        "is_map": True,
        "static_value": sol.optimal_value,
        "kinetic_cost": kin,
        "difference": kin - sol.optimal_value,
        "detour_cost": detour.flow_cost,
        "detour_strictly_larger": bool(detour.strict),
        "steps": list(steps),
        "mass_balance_residuals": residuals,
        "residual_ratios": [residuals[r] / residuals[r + 1] for r in range(len(residuals) - 1)],
        "dual_map_inverts": composed,
    }


def random_consistent_market(rng, n_max=6, spread=0.05, complete=True, edge_prob=0.4):
    """Arbitrage-free market from hidden fair prices with bid-ask losses.

    Every edge price is ``q_i / q_j`` times a factor in ``(exp(-spread), 1]``,
    so all cycles lose value. With ``complete=False`` a directed ring plus
    random chords is drawn instead of all pairs.
    """
    n = int(rng.integers(2, n_max + 1))
    fair = np.exp(rng.normal(0.0, 1.0, n))
    fair /= fair[0]
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    if not complete:
        ring = {(i, (i + 1) % n) for i in range(n)} | {((i + 1) % n, i) for i in range(n)}
        pairs = [p for p in pairs if p in ring or rng.random() < edge_prob]
    edges = tuple(
        (i, j, fair[i] / fair[j] * math.exp(-rng.uniform(0.0, spread))) for i, j in pairs
    )
    return MarketGraph(n, edges), fair


def plant_arbitrage(market, rng, gain=1.05):
    """Copy of ``market`` with a random cycle whose price product equals ``gain``.

    Returns ``(new_market, cycle_vertices)``.
    """
    n = market.n
    length = int(rng.integers(2, min(n, 4) + 1))
    verts = [int(v) for v in rng.choice(n, size=length, replace=False)]
    P = market.price_matrix.copy()
    np.fill_diagonal(P, 0.0)
    cyc = list(zip(verts, verts[1:] + verts[:1]))
    # fill missing cycle edges, then lift one price so the product is `gain`
    for a, b in cyc:
        if P[a, b] == 0.0:
            P[a, b] = 1.0
    prod = math.prod(P[a, b] for a, b in cyc)
    a, b = cyc[0]
    P[a, b] *= gain / prod
    return MarketGraph.from_matrix(P), verts
