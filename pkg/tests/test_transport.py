import numpy as np
import pytest
from hypothesis import given, strategies as st

from ncot.transport import (
    CostMatrix,
    DegenerateMassError,
    DiscreteMeasure,
    MassChangeMatrix,
    TransportPlan,
    check_plan_feasibility,
    classical_marginals,
    feasible_product_plan,
)


def test_measure_validation():
    DiscreteMeasure(None, [0.25, 0.75])
    with pytest.raises(ValueError):
        DiscreteMeasure(None, [0.5, 0.6])
    with pytest.raises(ValueError):
        DiscreteMeasure([0.0, 0.0], [0.5, 0.5])
    with pytest.raises(ValueError):
        DiscreteMeasure(None, [1.5, -0.5])
    m = DiscreteMeasure([[0, 0], [0, 1]], [0.5, 0.5])
    assert m.coords.shape == (2, 2)
    assert len(DiscreteMeasure.from_weights([1, 3], normalize=True)) == 2


def test_cost_mask_stores_inf():
    c = CostMatrix([[0.0, 5.0]], mask=[[True, False]])
    assert np.isinf(c.entries[0, 1])
    assert c.finite().tolist() == [[0.0, 0.0]]
    with pytest.raises(ValueError):
        CostMatrix([[np.inf]], mask=[[True]])
    with pytest.raises(ValueError):
        MassChangeMatrix([[-1.0]])


def test_identity_plan_under_conservation():
    mu = np.array([0.2, 0.3, 0.5])
    rep = check_plan_feasibility(TransportPlan(np.diag(mu), 1.0), mu, mu, np.ones((3, 3)))
    assert rep.is_feasible
    assert rep.retained_mass == 1.0


def test_two_target_plan(two_target):
    mu, nu, _, m = two_target
    good = TransportPlan([[1 / 3, 2 / 3]], 2 / 3)
    rep = check_plan_feasibility(good, mu, nu, m)
    assert rep.is_feasible and rep.max_residual < 1e-15
    rows, cols = classical_marginals(good, m)
    np.testing.assert_allclose(cols, [1 / 3, 1 / 3])
    bad = TransportPlan.from_entries([[0.5, 0.5]], m)
    rep = check_plan_feasibility(bad, mu, nu, m)
    assert not rep.is_feasible
    assert np.abs(rep.col_residuals).max() > 0.1


def test_stored_retained_mass_is_checked(two_target):
    mu, nu, _, m = two_target
    rep = check_plan_feasibility(TransportPlan([[1 / 3, 2 / 3]], 0.5), mu, nu, m)
    assert not rep.is_feasible
    assert rep.retained_mass_error == pytest.approx(1 / 6)


def test_zero_retained_mass_never_feasible():
    mu, nu = np.array([1.0]), np.array([1.0])
    plan = TransportPlan([[1.0]], 0.0)
    assert not check_plan_feasibility(plan, mu, nu, np.zeros((1, 1))).is_feasible


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        check_plan_feasibility(np.ones((1, 2)) / 2, [1.0], [1.0], np.ones((1, 1)))


def test_product_plan_examples():
    mu = np.array([0.4, 0.6])
    nu = np.array([0.3, 0.7])
    p = feasible_product_plan(mu, nu, np.ones((2, 2)))
    np.testing.assert_allclose(p.entries, np.outer(mu, nu))
    # column sums of m under mu are (1, 1/2): nu~ proportional to (1/2, 1)
    m = np.array([[1.0, 0.5], [1.0, 0.5]])
    p = feasible_product_plan([0.5, 0.5], [0.5, 0.5], m)
    np.testing.assert_allclose(p.entries, np.outer([0.5, 0.5], [1 / 3, 2 / 3]))
    assert check_plan_feasibility(p, [0.5, 0.5], [0.5, 0.5], m, tol=1e-10).is_feasible
    with pytest.raises(DegenerateMassError):
        feasible_product_plan([1.0], [0.5, 0.5], [[1.0, 0.0]])


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_product_plan_always_feasible(ns, nt, seed):
    rng = np.random.default_rng(seed)
    mu = rng.dirichlet(np.ones(ns))
    nu = rng.dirichlet(np.ones(nt))
    m = rng.random((ns, nt)) * 3
    plan = feasible_product_plan(mu, nu, m)
    rep = check_plan_feasibility(plan, mu, nu, m, tol=1e-10)
    assert rep.is_feasible
    _, cols = classical_marginals(plan, m)
    np.testing.assert_allclose(cols / plan.retained_mass, nu, atol=1e-10)
