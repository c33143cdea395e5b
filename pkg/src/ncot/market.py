"""Market graphs, arbitrage checks, trade algebra and optimal rebalancing.

Vertices are indexed from 0 here; vertex 0 plays the role of the
numeraire. ``P[i, j]`` is the number of units of asset ``j`` received per
unit of asset ``i`` sold, with ``P[i, i] = 1`` and ``P = 0`` off the edges.
A trade ``xi[i, j] >= 0`` counts units of asset ``i`` sold for asset ``j``.

Rebalancing reduces to non-conservative transport with

    mu_i = q_i x_i / v,   c(i, j) = 1 - (q_j / q_i) P[i, j],   m(i, j) = (q_j / q_i) P[i, j]

on edges (and ``c = 0``, ``m = 1`` on the diagonal), where ``q`` is a
consistent price vector and ``v = q @ x`` the portfolio value. Since
``c + m = 1`` on every admissible pair, the transport cost of a plan equals
``1 - Z``: the fraction of value lost to spreads.
"""
from dataclasses import dataclass
import logging
import math

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from . import kernels
from .duality import certify_duality, potentials_from_lp
from .solver import InfeasibleProblemError, solve_ncot
from .transport import CostMatrix, DiscreteMeasure, MassChangeMatrix, TransportPlan

log = logging.getLogger(__name__)

BF_TOL = 1e-12


class MarketError(ValueError):
    pass


class ArbitrageError(MarketError):
    def __init__(self, cycle):
        super().__init__(f"market admits arbitrage along {cycle.edges} (price product {cycle.product:.17g})")
        self.cycle = cycle


class DisconnectedMarketError(MarketError):
    pass


class NegativeComponentError(MarketError):
    pass


class OversoldError(MarketError):
    pass


class ZeroValueError(MarketError):
    pass


class InfeasibleTargetError(MarketError):
    pass


@dataclass(frozen=True)
class MarketGraph:
    """Directed market graph with positive prices on the listed edges."""

    n: int
    edges: tuple

    def __post_init__(self):
        if self.n < 1:
            raise MarketError("a market needs at least one asset")
        seen = set()
        clean = []
        for i, j, p in self.edges:
            i, j, p = int(i), int(j), float(p)
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise MarketError(f"edge ({i}, {j}) refers to a missing vertex")
            if i == j:
                raise MarketError(f"self-loop at vertex {i}")
            if (i, j) in seen:
                raise MarketError(f"duplicate edge ({i}, {j})")
            if not (math.isfinite(p) and p > 0):
                raise MarketError(f"price on edge ({i}, {j}) must be positive and finite, got {p}")
            seen.add((i, j))
            clean.append((i, j, p))
        object.__setattr__(self, "edges", tuple(clean))

    @classmethod
    def from_matrix(cls, prices):
        """Edges wherever an off-diagonal entry is positive."""
        P = np.asarray(prices, dtype=float)
        rows, cols = np.nonzero(P > 0)
        edges = [(i, j, P[i, j]) for i, j in zip(rows, cols) if i != j]
        return cls(P.shape[0], tuple(edges))

    @property
    def price_matrix(self):
        P = np.zeros((self.n, self.n))
        for i, j, p in self.edges:
            P[i, j] = p
        np.fill_diagonal(P, 1.0)
        return P

    @property
    def edge_mask(self):
        mask = np.zeros((self.n, self.n), dtype=bool)
        for i, j, _ in self.edges:
            mask[i, j] = True
        return mask

    def _arrays(self):
        src = np.array([e[0] for e in self.edges], dtype=np.int64)
        dst = np.array([e[1] for e in self.edges], dtype=np.int64)
        w = np.array([-math.log(e[2]) for e in self.edges], dtype=float)
        return src, dst, w


@dataclass(frozen=True)
class NoArbitrage:
    def __bool__(self):
        return False

    def to_dict(self):
        return {"arbitrage": False}


@dataclass(frozen=True)
class Cycle:
    """Directed cycle ``[(v0, v1), (v1, v2), ..., (vk, v0)]`` with price product above 1."""

    edges: list
    product: float

    def __bool__(self):
        return True

    def to_dict(self, one_based=True):
        off = 1 if one_based else 0
        return {
            "arbitrage": True,
            "cycle": [[i + off, j + off] for i, j in self.edges],
            "product": self.product,
        }


# --------------------------------------------------------------------------
# graph checks


def check_connectivity(market):
    """Connectivity of the undirected support of the market graph."""
    if market.n == 1:
        return True
    src, dst, _ = market._arrays()
    adj = coo_matrix((np.ones(src.size), (src, dst)), shape=(market.n, market.n))
    count, _ = connected_components(adj, directed=False)
    return count == 1


def check_strong_connectivity(market):
    """Whether every asset can be reached from every other along directed edges."""
    if market.n == 1:
        return True
    src, dst, _ = market._arrays()
    adj = coo_matrix((np.ones(src.size), (src, dst)), shape=(market.n, market.n))
    count, _ = connected_components(adj, directed=True, connection="strong")
    return count == 1


def _cycle_from_pred(market, pred, start, src, dst):
    """Walk predecessor edges from ``start`` until a vertex repeats."""
    v = start
    for _ in range(market.n):
        e = pred[v]
        if e < 0:
            return None
        v = src[e]
    # v now lies on a cycle of the predecessor graph
    cyc = []
    u = v
    while True:
        e = pred[u]
        if e < 0:
            return None
        cyc.append((int(src[e]), int(dst[e])))
        u = src[e]
        if u == v or len(cyc) > market.n:
            break
    cyc.reverse()
    return cyc


def detect_arbitrage(market):
    """Bellman-Ford on ``-log P`` from a virtual source joined to every vertex.

    Returns :class:`NoArbitrage` or a :class:`Cycle` whose price product has
    been recomputed and exceeds 1. A product of exactly 1 is not arbitrage.
    """
    if not market.edges:
        return NoArbitrage()
    src, dst, w = market._arrays()
    _, pred, last = kernels.bellman_ford_kernel(market.n, src, dst, w, -1, BF_TOL)
    if last < 0:
        return NoArbitrage()
    cyc = _cycle_from_pred(market, pred, last, src, dst)
    if cyc is None:
        log.debug("relaxation persisted but no predecessor cycle was found")
        return NoArbitrage()
    P = market.price_matrix
    prod = float(np.prod([P[i, j] for i, j in cyc]))
    if not prod > 1.0:
        log.debug("candidate cycle %s has product %.17g <= 1; treated as no arbitrage", cyc, prod)
        return NoArbitrage()
    return Cycle(cyc, prod)


def _shortest_paths(market, root, reverse=False):
    """Distances under ``-log P`` and predecessor edges from (or, reversed, to) ``root``."""
    src, dst, w = market._arrays()
    if reverse:
        src, dst = dst, src
    dist, pred, last = kernels.bellman_ford_kernel(market.n, src, dst, w, root, BF_TOL)
    if last >= 0:
        raise ArbitrageError(detect_arbitrage(market))
    return dist, pred, src, dst


def _path_edges(pred, src, dst, target, root):
    """Edge list of the tree path ``root -> target`` (in the searched orientation)."""
    path = []
    v = target
    while v != root:
        e = pred[v]
        if e < 0:
            return None
        path.append((int(src[e]), int(dst[e])))
        v = src[e]
        if len(path) > pred.size:
            return None
    path.reverse()
    return path


def consistent_prices(market, root=0):
    """Consistent price vector ``q = exp(dist)`` from shortest paths out of ``root``.

    Vertices that ``root`` cannot reach are priced from a virtual source that
    reaches all vertices, shifted so that ``q[root] = 1``. A final pass nudges
    entries by single ulps where rounding would break ``P[i,j] * q[j] <= q[i]``
    or ``P[i,j] <= q[i] / q[j]`` when scanned in floating point.
    """
    res = detect_arbitrage(market)
    if res:
        raise ArbitrageError(res)
    if market.n == 1:
        return np.ones(1)
    src, dst, w = market._arrays()
    dist, _, _ = kernels.bellman_ford_kernel(market.n, src, dst, w, root, BF_TOL)
    if not np.isfinite(dist).all():
        dist, _, _ = kernels.bellman_ford_kernel(market.n, src, dst, w, -1, BF_TOL)
        dist = dist - dist[root]
    q = np.exp(dist)
    q /= q[root]
    return _repair_consistency(market, q, root)


def _repair_consistency(market, q, root, max_rounds=None):
    q = q.copy()
    rounds = max_rounds or 50 * market.n
    for _ in range(rounds):
        changed = False
        for i, j, p in market.edges:
            if _edge_ok(p, q[i], q[j]):
                continue
            changed = True
            if j != root:
                q[j] = np.nextafter(q[i] / p, 0.0)
                while not _edge_ok(p, q[i], q[j]):
                    q[j] = np.nextafter(q[j], 0.0)
            else:
                q[i] = np.nextafter(p * q[j], np.inf)
                while not _edge_ok(p, q[i], q[j]):
                    q[i] = np.nextafter(q[i], np.inf)
        if not changed:
            return q
    raise MarketError("could not make prices consistent in floating point (arbitrage at rounding level)")


def _edge_ok(p, qi, qj):
    # both roundings of the inequality, so either way of scanning agrees
    return p * qj <= qi and p <= qi / qj


def is_consistent(market, q):
    """Scan ``P[i,j] q[j] <= q[i]`` and ``P[i,j] <= q[i] / q[j]`` on every edge, with no tolerance."""
    return all(_edge_ok(p, q[i], q[j]) for i, j, p in market.edges)


# --------------------------------------------------------------------------
# trade algebra


def _flows(xi, n):
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (n, n):
        raise MarketError(f"trade must be {n}x{n}, got {xi.shape}")
    return xi


def check_trade(xi, market, tol=0.0):
    """Raise unless ``xi`` is nonnegative and vanishes off the edges (diagonal included)."""
    xi = _flows(xi, market.n)
    if (xi < -tol).any():
        raise MarketError("trade flows must be nonnegative")
    off = ~market.edge_mask
    if (np.abs(xi[off]) > tol).any():
        raise MarketError("trade uses pairs that are not market edges")
    return xi


def trade_delta(xi, market):
    """``dx_i = sum_j P[j,i] xi[j,i] - sum_j xi[i,j]``."""
    xi = check_trade(xi, market)
    P = market.price_matrix
    np.fill_diagonal(P, 0.0)
    return (P * xi).sum(axis=0) - xi.sum(axis=1)


def trade_cost(xi, q, market):
    """``sum (q_i - q_j P[i,j]) xi[i,j]`` over edges: the value lost to spreads."""
    xi = check_trade(xi, market)
    q = np.asarray(q, dtype=float)
    total = 0.0
    for i, j, p in market.edges:
        total += (q[i] - q[j] * p) * xi[i, j]
    return float(total)


def proportions(x, q):
    vals = np.asarray(q, dtype=float) * np.asarray(x, dtype=float)
    return vals / vals.sum()


def trade_edges(xi, market, one_based=True):
    off = 1 if one_based else 0
    return [
        {"from": i + off, "to": j + off, "units": float(xi[i, j])}
        for i, j, _ in market.edges
        if xi[i, j] != 0.0
    ]


# --------------------------------------------------------------------------
# feasible trades


@dataclass
class StarTrade:
    position: np.ndarray  # post-trade units z
    purchases: np.ndarray  # xi[0, i]: numeraire units spent on asset i
    cost: float


def star_feasible_trade(money_pot_value, nu, ask_prices, q):
    """Buy target proportions from a pot held entirely in the numeraire.

    Solves ``(diag q + nu (P_a - q)^T) z = nu`` by the Sherman-Morrison
    formula with ``D = diag q`` and ``w = P_a - q``, then scales by the pot.
    ``q`` is rescaled so that ``q[0] = 1`` and ``P_a[0]`` is taken as 1.
    Purchases are ``xi[0, i] = P_a[i] z_i``.
    """
    nu = np.asarray(nu, dtype=float)
    q = np.asarray(q, dtype=float)
    q = q / q[0]
    pa = np.asarray(ask_prices, dtype=float).copy()
    pa[0] = 1.0
    if not money_pot_value > 0:
        raise MarketError("money pot must have positive value")
    if (pa < q * (1.0 - 1e-12)).any():
        raise MarketError("ask prices must dominate the consistent prices (P_a >= q)")
    # path products can undershoot q by a few ulps; those are tight edges
    pa = np.maximum(pa, q)
    w = pa - q
    dinv_nu = nu / q
    s = float(w @ dinv_nu)
    z = dinv_nu - dinv_nu * (s / (1.0 + s))
    if (z < -1e-15).any():
        raise NegativeComponentError(
            f"rank-one solve produced negative holdings {z.min():.3e}; system is ill-conditioned"
        )
    z = np.maximum(z, 0.0) * money_pot_value
    purchases = pa * z
    purchases[0] = 0.0
    cost = float(w @ z)
    return StarTrade(z, purchases, cost)


def _route(xi, path, amount, P):
    """Push ``amount`` units of the first asset along ``path``; returns units delivered."""
    for i, j in path:
        xi[i, j] += amount
        amount *= P[i, j]
    return amount


def general_feasible_trade(market, x, nu, q, root=0):
    """Money-pot construction on a general market.

    Stage one liquidates every asset into the numeraire along shortest
    paths (under ``-log P``); stage two buys target proportions on the
    hypothetical star market whose prices are the path products from the
    numeraire, and routes each purchase along its path.
    """
    if root != 0:
        raise MarketError("the numeraire is vertex 0")
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    q = np.asarray(q, dtype=float) / q[0]
    if (x < 0).any():
        raise MarketError("holdings must be nonnegative")
    if not check_strong_connectivity(market):
        raise DisconnectedMarketError("money-pot routing needs directed paths to and from the numeraire")
    if detect_arbitrage(market):
        raise ArbitrageError(detect_arbitrage(market))
    P = market.price_matrix
    xi = np.zeros((market.n, market.n))
    # paths i -> root: search the reversed graph from root
    _, pred_in, s_in, d_in = _shortest_paths(market, root, reverse=True)
    pot = x[root]
    for i in range(market.n):
        if i == root or x[i] == 0.0:
            continue
        rev = _path_edges(pred_in, s_in, d_in, i, root)
        path = [(b, a) for a, b in reversed(rev)]
        pot += _route(xi, path, x[i], P)
    _, pred_out, s_out, d_out = _shortest_paths(market, root)
    paths = {}
    pa = np.ones(market.n)
    for i in range(market.n):
        if i == root:
            continue
        paths[i] = _path_edges(pred_out, s_out, d_out, i, root)
        pa[i] = 1.0 / float(np.prod([P[a, b] for a, b in paths[i]]))
    star = star_feasible_trade(pot, nu, pa, q)
    for i, path in paths.items():
        if star.purchases[i] > 0:
            _route(xi, path, star.purchases[i], P)
    return xi


# --------------------------------------------------------------------------
# rebalancing as non-conservative transport


@dataclass
class NcotInstance:
    mu: DiscreteMeasure
    cost: CostMatrix
    mass_change: MassChangeMatrix
    value: float


def portfolio_value(x, q):
    return float(np.asarray(q, dtype=float) @ np.asarray(x, dtype=float))


def rebalance_to_ncot(market, x, q):
    """Source measure, cost, mass factor and value of the rebalancing problem."""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if (x < 0).any():
        raise MarketError("holdings must be nonnegative")
    v = portfolio_value(x, q)
    if not v > 0:
        raise ZeroValueError("portfolio has zero value")
    mask = market.edge_mask | np.eye(market.n, dtype=bool)
    ratio = q[None, :] / q[:, None] * market.price_matrix
    m = np.where(mask, ratio, 0.0)
    np.fill_diagonal(m, 1.0)
    c = np.where(mask, 1.0 - m, np.inf)
    np.fill_diagonal(c, 0.0)
    mu = DiscreteMeasure(None, q * x / v)
    return NcotInstance(mu, CostMatrix(c, mask), MassChangeMatrix(m), v)


def plan_to_trade(plan, q, v):
    """``xi[i, j] = (v / q_i) pi[i, j]`` off the diagonal."""
    p = plan.entries if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    q = np.asarray(q, dtype=float)
    xi = (v / q)[:, None] * p
    np.fill_diagonal(xi, 0.0)
    return xi


def trade_to_plan(xi, x, q, v, mass_change=None, tol=1e-12):
    """Plan of a trade: ``pi[i, j] = (q_i / v) xi[i, j]`` and the unsold remainder on the diagonal.

    Raises
    ------
    OversoldError
        If some asset sells more units than it holds.
    """
    xi = np.asarray(xi, dtype=float)
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    off = xi.copy()
    np.fill_diagonal(off, 0.0)
    keep = x - off.sum(axis=1)
    scale = 1.0 + np.abs(x).max(initial=0.0)
    if (keep < -tol * scale).any():
        i = int(np.argmin(keep))
        raise OversoldError(f"asset {i} sells {off[i].sum():.17g} units but holds {x[i]:.17g}")
    keep = np.maximum(keep, 0.0)
    p = (q / v)[:, None] * off
    p[np.diag_indices_from(p)] = q / v * keep
    if mass_change is None:
        return TransportPlan(p, 1.0)
    me = mass_change.entries if isinstance(mass_change, MassChangeMatrix) else np.asarray(mass_change)
    return TransportPlan(p, float((me * p).sum()))


def rebalance_edge_lp(market, x, nu, q):
    """Rebalancing solved directly over edge flows (no transport reformulation).

    Variables are ``xi`` on the edges and the post-trade holdings ``s``;
    constraints are ``s = x + dx(xi)`` and ``q_i s_i = nu_i q @ s``. Unlike
    the transport form, flows may pass through assets that are not held, so
    this LP can be feasible (or cheaper) when multi-hop routing is needed.

    Returns ``(cost, xi)`` or ``None`` when infeasible.
    """
    from .lp import LinearProgram, solve_lp

    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    q = np.asarray(q, dtype=float)
    n, ne = market.n, len(market.edges)
    A = np.zeros((2 * n, ne + n))
    b = np.zeros(2 * n)
    cost = np.zeros(ne + n)
    for e, (i, j, p) in enumerate(market.edges):
        # holdings rows: dx_i - s_i = -x_i
        A[i, e] -= 1.0
        A[j, e] += p
        cost[e] = q[i] - q[j] * p
    A[np.arange(n), ne + np.arange(n)] = -1.0
    b[:n] = -x
    A[n:, ne:] = -np.outer(nu, q)
    A[n + np.arange(n), ne + np.arange(n)] += q
    sol = solve_lp(LinearProgram(cost, A, b))
    if not sol.optimal:
        return None
    xi = np.zeros((n, n))
    for e, (i, j, _) in enumerate(market.edges):
        xi[i, j] = sol.primal[e]
    return sol.objective_value, xi


@dataclass
class RebalanceResult:
    trade: np.ndarray
    portfolio: np.ndarray
    cost: float
    value: float
    ncot_value: float
    gap: float
    proportions: np.ndarray

    def to_dict(self, market):
        return {
            "trade": trade_edges(self.trade, market),
            "portfolio": self.portfolio.tolist(),
            "cost": self.cost,
            "value_before": self.value,
            "value_after": self.value - self.cost,
            "ncot_value": self.ncot_value,
            "proportions": self.proportions.tolist(),
            "certificate_gap": self.gap,
        }


def optimal_rebalance(market, x, nu, q, tol=1e-8):
    """Cheapest trade reaching target proportions ``nu``.

    Solves the transport problem of :func:`rebalance_to_ncot`, converts the
    plan to edge flows and checks the outcome: proportions equal ``nu``,
    holdings stay nonnegative and the trade cost equals ``v`` times the
    transport value, all within ``tol``. The duality gap of LP-derived
    potentials is attached.
    """
    nu = np.asarray(nu, dtype=float)
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if not is_consistent(market, q):
        raise MarketError("price vector is not consistent with the market")
    inst = rebalance_to_ncot(market, x, q)
    target = DiscreteMeasure(None, nu)
    try:
        sol = solve_ncot(inst.mu, target, inst.cost, inst.mass_change)
    except InfeasibleProblemError as exc:
        raise InfeasibleTargetError(f"target proportions are unreachable: {exc}") from exc
    xi = plan_to_trade(sol.plan, q, inst.value)
    xi[~market.edge_mask] = 0.0
    post = x + trade_delta(xi, market)
    v = inst.value
    if (post < -tol * (1.0 + np.abs(x).max())).any():
        raise MarketError(f"rebalanced holdings go negative ({post.min():.3e})")
    post = np.maximum(post, 0.0)
    props = proportions(post, q)
    cost = trade_cost(xi, q, market)
    if np.abs(props - nu).max() > tol:
        raise MarketError(f"post-trade proportions miss the target by {np.abs(props - nu).max():.3e}")
    if abs(cost - v * sol.optimal_value) > tol * (1.0 + v):
        raise MarketError("trade cost disagrees with the transport value")
    pot = potentials_from_lp(sol, inst.cost, inst.mass_change, target)
    gap = certify_duality(sol, pot, inst.mu, inst.cost, inst.mass_change, target)
    return RebalanceResult(xi, post, cost, v, sol.optimal_value, gap, props)
