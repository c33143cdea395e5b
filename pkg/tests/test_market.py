import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncot.demos import plant_arbitrage, random_consistent_market
from ncot.market import (
    ArbitrageError,
    Cycle,
    DisconnectedMarketError,
    InfeasibleTargetError,
    MarketError,
    MarketGraph,
    NoArbitrage,
    OversoldError,
    check_connectivity,
    check_trade,
    consistent_prices,
    detect_arbitrage,
    general_feasible_trade,
    is_consistent,
    optimal_rebalance,
    plan_to_trade,
    proportions,
    rebalance_edge_lp,
    rebalance_to_ncot,
    star_feasible_trade,
    trade_cost,
    trade_delta,
    trade_to_plan,
)
from ncot.transport import check_plan_feasibility

TWO = MarketGraph(2, ((0, 1, 0.5), (1, 0, 1.6)))


def _random_trade(rng, market, scale=1.0):
    xi = rng.random((market.n, market.n)) * scale
    xi[~market.edge_mask] = 0.0
    return xi


def test_graph_validation():
    with pytest.raises(MarketError):
        MarketGraph(2, ((0, 1, -1.0),))
    with pytest.raises(MarketError):
        MarketGraph(2, ((0, 0, 1.0),))
    with pytest.raises(MarketError):
        MarketGraph(2, ((0, 2, 1.0),))
    with pytest.raises(MarketError):
        MarketGraph(2, ((0, 1, 1.0), (0, 1, 2.0)))


def test_connectivity():
    assert check_connectivity(MarketGraph(1, ()))
    assert not check_connectivity(MarketGraph(4, ((0, 1, 1.0), (2, 3, 1.0))))
    star = MarketGraph(4, tuple((0, i, 1.0) for i in range(1, 4)))
    assert check_connectivity(star)


def test_arbitrage_examples():
    assert isinstance(detect_arbitrage(TWO), NoArbitrage)
    res = detect_arbitrage(MarketGraph(2, ((0, 1, 0.8), (1, 0, 1.5))))
    assert isinstance(res, Cycle)
    assert sorted(res.edges) == [(0, 1), (1, 0)]
    assert res.product == pytest.approx(1.2)
    assert res.to_dict()["cycle"] in ([[1, 2], [2, 1]], [[2, 1], [1, 2]])
    # a product of exactly one is not arbitrage
    assert not detect_arbitrage(MarketGraph(2, ((0, 1, 0.5), (1, 0, 2.0))))


def test_consistent_price_examples():
    q = consistent_prices(TWO)
    np.testing.assert_array_equal(q, [1.0, 2.0])
    assert is_consistent(TWO, q)
    assert consistent_prices(MarketGraph(1, ())).tolist() == [1.0]
    with pytest.raises(ArbitrageError):
        consistent_prices(MarketGraph(2, ((0, 1, 0.8), (1, 0, 1.5))))


def test_star_market_price_interval():
    # numeraire 0; buying asset i costs P^a_i numeraire units, selling yields P^b_i
    ask = np.array([1.0, 2.0, 0.5, 4.0])
    bid = np.array([1.0, 1.9, 0.45, 3.0])
    edges = []
    for i in range(1, 4):
        edges += [(0, i, 1.0 / ask[i]), (i, 0, bid[i])]
    q = consistent_prices(MarketGraph(4, tuple(edges)))
    assert np.all(bid - 1e-15 <= q) and np.all(q <= ask + 1e-15)


def test_trade_algebra_examples():
    m = MarketGraph(2, ((0, 1, 1 / 0.9), (1, 0, 0.9)))
    xi = np.array([[0.0, 0.0], [1.0, 0.0]])
    np.testing.assert_allclose(trade_delta(xi, m), [0.9, -1.0])
    assert trade_cost(xi, [1.0, 1.0], m) == pytest.approx(0.1)
    assert trade_cost(np.zeros((2, 2)), [1.0, 1.0], m) == 0.0
    np.testing.assert_array_equal(trade_delta(np.zeros((2, 2)), m), [0.0, 0.0])
    # round trip loses when the spread is positive
    spread = MarketGraph(2, ((0, 1, 0.5), (1, 0, 1.9)))
    rt = np.array([[0.0, 1.0], [0.5, 0.0]])
    assert trade_delta(rt, spread)[0] < 0
    # tight edges cost nothing
    assert trade_cost(np.array([[0.0, 1.0], [0.0, 0.0]]), [1.0, 2.0], TWO) == 0.0
    with pytest.raises(MarketError):
        check_trade(np.array([[1.0, 0.0], [0.0, 0.0]]), TWO)


def test_star_trade_examples():
    st_ = star_feasible_trade(1.0, [0.5, 0.5], [1.0, 1.1], [1.0, 1.0])
    np.testing.assert_allclose(st_.position, [10 / 21, 10 / 21])
    assert st_.purchases[1] == pytest.approx(11 / 21)
    assert st_.cost == pytest.approx(1 / 21)
    # self-financing: spent plus kept equals the pot
    assert st_.position[0] + st_.purchases[1] == pytest.approx(1.0)
    flat = star_feasible_trade(2.0, [0.2, 0.8], [1.0, 3.0], [1.0, 3.0])
    np.testing.assert_allclose(flat.position, 2.0 * np.array([0.2, 0.8 / 3]))
    assert flat.cost == 0.0
    cash = star_feasible_trade(1.0, [1.0, 0.0, 0.0], [1.0, 2.0, 3.0], [1.0, 1.5, 2.0])
    np.testing.assert_allclose(cash.position, [1.0, 0.0, 0.0])
    assert not cash.purchases.any()


def test_triangle_money_pot():
    tri = MarketGraph(3, ((0, 1, 0.98), (1, 0, 0.99), (1, 2, 1.97), (2, 1, 0.5), (0, 2, 1.95),
                          (2, 0, 0.5)))
    q = consistent_prices(tri)
    x = np.array([1.0, 0.0, 0.0])
    nu = np.full(3, 1 / 3)
    xi = general_feasible_trade(tri, x, nu, q)
    post = x + trade_delta(xi, tri)
    assert (post >= -1e-12).all()
    np.testing.assert_allclose(proportions(post, q), nu, atol=1e-9)


def test_money_pot_on_star_matches_star_trade():
    ask = np.array([1.0, 1.1, 2.2])
    bid = np.array([1.0, 1.0, 2.0])
    edges = []
    for i in (1, 2):
        edges += [(0, i, 1.0 / ask[i]), (i, 0, bid[i])]
    star = MarketGraph(3, tuple(edges))
    q = consistent_prices(star)
    nu = np.array([0.2, 0.5, 0.3])
    xi = general_feasible_trade(star, [1.0, 0.0, 0.0], nu, q)
    ref = star_feasible_trade(1.0, nu, ask, q)
    np.testing.assert_allclose(xi[0], ref.purchases, atol=1e-15)


def test_money_pot_needs_strong_connectivity():
    one_way = MarketGraph(2, ((0, 1, 1.0),))
    with pytest.raises(DisconnectedMarketError):
        general_feasible_trade(one_way, [1.0, 0.0], [0.5, 0.5], [1.0, 1.0])


def test_rebalance_to_ncot_example():
    inst = rebalance_to_ncot(TWO, [1.0, 0.0], [1.0, 2.0])
    np.testing.assert_array_equal(inst.mu.weights, [1.0, 0.0])
    assert inst.cost.entries[1, 0] == pytest.approx(0.2)
    assert inst.mass_change.entries[1, 0] == pytest.approx(0.8)
    assert inst.cost.entries[0, 1] == 0.0 and inst.mass_change.entries[0, 0] == 1.0


def test_zero_trade_when_already_on_target():
    q = consistent_prices(TWO)
    x = np.array([1.0, 2.0])
    res = optimal_rebalance(TWO, x, proportions(x, q), q)
    assert res.cost == 0.0 and not res.trade.any()


def test_star_cost_is_an_upper_bound():
    star = MarketGraph(2, ((0, 1, 1 / 1.1), (1, 0, 1.0)))
    q = np.array([1.0, 1.0])
    res = optimal_rebalance(star, [1.0, 0.0], [0.5, 0.5], q)
    assert res.cost <= 1 / 21 + 1e-12
    assert res.cost == pytest.approx(1 / 21, abs=1e-12)


def test_trade_to_plan_rejects_overselling():
    with pytest.raises(OversoldError):
        trade_to_plan(np.array([[0.0, 2.0], [0.0, 0.0]]), [1.0, 0.0], [1.0, 1.0], 1.0)


def test_zero_trade_plan_is_diagonal():
    q = np.array([1.0, 2.0])
    x = np.array([1.0, 2.0])
    plan = trade_to_plan(np.zeros((2, 2)), x, q, 5.0)
    np.testing.assert_allclose(plan.entries, np.diag([0.2, 0.8]))


def test_star_trade_plan_is_feasible():
    star = MarketGraph(2, ((0, 1, 1 / 1.1), (1, 0, 1.0)))
    q = np.array([1.0, 1.0])
    x = np.array([1.0, 0.0])
    st_ = star_feasible_trade(1.0, [0.5, 0.5], [1.0, 1.1], q)
    xi = np.array([[0.0, st_.purchases[1]], [0.0, 0.0]])
    inst = rebalance_to_ncot(star, x, q)
    plan = trade_to_plan(xi, x, q, 1.0, inst.mass_change)
    assert check_plan_feasibility(plan, inst.mu, [0.5, 0.5], inst.mass_change).is_feasible
    assert trade_cost(xi, q, star) == pytest.approx((inst.cost.finite() * plan.entries).sum())


def test_sparse_market_needs_multi_hop_routing():
    # value must pass through asset 1, which is not held: the transport form
    # (one hop per unit of value) is infeasible, the edge-flow LP is not
    line = MarketGraph(3, ((0, 1, 0.99), (1, 0, 0.99), (1, 2, 0.99), (2, 1, 0.99)))
    q = np.ones(3)
    with pytest.raises(InfeasibleTargetError):
        optimal_rebalance(line, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], q)
    cost, xi = rebalance_edge_lp(line, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], q)
    assert cost == pytest.approx(1 - 0.99 ** 2)


def test_multi_hop_can_undercut_the_transport_route():
    mk = MarketGraph(3, ((0, 1, 0.99), (1, 2, 0.99), (0, 2, 0.9), (1, 0, 0.99), (2, 1, 0.99),
                         (2, 0, 0.99)))
    q = np.ones(3)
    res = optimal_rebalance(mk, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], q)
    direct, _ = rebalance_edge_lp(mk, [1.0, 0.0, 0.0], [0.0, 0.0, 1.0], q)
    assert res.cost == pytest.approx(0.1)
    assert direct == pytest.approx(1 - 0.99 ** 2)


def _cycles(n, max_len=4):
    for length in range(2, min(n, max_len) + 1):
        for verts in itertools.permutations(range(n), length):
            if verts[0] == min(verts):
                yield list(zip(verts, verts[1:] + verts[:1]))


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_no_arbitrage_properties(seed, complete):
    rng = np.random.default_rng(seed)
    mk, _ = random_consistent_market(rng, complete=complete)
    assert not detect_arbitrage(mk)
    P = mk.price_matrix
    mask = mk.edge_mask
    for cyc in _cycles(mk.n):
        if all(mask[a, b] for a, b in cyc):
            assert np.prod([P[a, b] for a, b in cyc]) <= 1 + 1e-12
    q = consistent_prices(mk)
    assert q[0] == 1.0 and is_consistent(mk, q)
    # cost nonnegativity and the value identity for arbitrary trades
    x = rng.random(mk.n) * 2
    xi = _random_trade(rng, mk)
    cost = trade_cost(xi, q, mk)
    assert cost >= 0
    post = x + trade_delta(xi, mk)
    assert q @ post == pytest.approx(q @ x - cost, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_planted_arbitrage_is_found(seed):
    rng = np.random.default_rng(seed)
    mk, _ = random_consistent_market(rng, complete=False)
    bad, _ = plant_arbitrage(mk, rng, gain=1.0 + rng.uniform(1e-3, 0.5))
    cyc = detect_arbitrage(bad)
    assert cyc and cyc.product > 1
    P = bad.price_matrix
    assert np.prod([P[a, b] for a, b in cyc.edges]) == pytest.approx(cyc.product)
    # the witness is a closed walk over existing edges
    assert all(bad.edge_mask[a, b] for a, b in cyc.edges)
    assert all(cyc.edges[t][1] == cyc.edges[(t + 1) % len(cyc.edges)][0] for t in range(len(cyc.edges)))


@given(st.integers(0, 2**32 - 1))
def test_rebalancing_equivalence(seed):
    rng = np.random.default_rng(seed)
    mk, _ = random_consistent_market(rng)
    q = consistent_prices(mk)
    x = rng.random(mk.n)
    nu = rng.dirichlet(np.ones(mk.n))
    res = optimal_rebalance(mk, x, nu, q)
    assert abs(res.cost - res.value * res.ncot_value) <= 1e-8
    np.testing.assert_allclose(res.proportions, nu, atol=1e-8)
    assert q @ res.portfolio == pytest.approx(res.value - res.cost, abs=1e-10)
    assert abs(res.gap) <= 1e-8 * (1 + abs(res.ncot_value))
    # round-trip exclusion on pairs with a strictly positive spread
    P = mk.price_matrix
    for i in range(mk.n):
        for j in range(i + 1, mk.n):
            if P[i, j] * P[j, i] < 1:
                assert res.trade[i, j] == 0.0 or res.trade[j, i] == 0.0
    # conversions are mutually inverse
    inst = rebalance_to_ncot(mk, x, q)
    plan = trade_to_plan(res.trade, x, q, res.value, inst.mass_change)
    np.testing.assert_allclose(plan_to_trade(plan, q, res.value), res.trade, rtol=0, atol=1e-12)
    # the money pot is feasible, hence never cheaper than the optimum
    pot = general_feasible_trade(mk, x, nu, q)
    assert trade_cost(pot, q, mk) >= res.cost - 1e-10
    # flows through unheld assets can only help
    direct, _ = rebalance_edge_lp(mk, x, nu, q)
    assert direct <= res.cost + 1e-9
