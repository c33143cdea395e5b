"""Exact LP solves of the non-conservative Kantorovich problem.

Variables are the admissible (masked-in) plan entries in row-major order,
followed by the retained mass ``Z``. The constraints are::

    sum_j pi[i, j]                 = mu[i]      (one row per source)
    sum_i m[i, j] pi[i, j] - nu[j] Z = 0         (one row per target)

Summing the target rows gives ``sum(m * pi) = Z * sum(nu) = Z`` because ``nu``
is a probability vector, so the definition of ``Z`` needs no row of its own.
With ``m == 1`` the target rows read ``sum_i pi[i, j] = nu[j] Z`` and the row
block forces ``Z = 1``: the classical Kantorovich LP.
"""
from dataclasses import dataclass
import warnings

import numpy as np

from .lp import LinearProgram, LpStatus, solve_lp
from .transport import (
    CostMatrix,
    DiscreteMeasure,
    MassChangeMatrix,
    TransportPlan,
    _mass_entries,
    _weights,
)

DEGENERATE_Z = 1e-10


class NcotError(Exception):
    pass


class EmptyRowError(NcotError, ValueError):
    pass


class InfeasibleProblemError(NcotError):
    status = "infeasible"


class UnboundedProblemError(NcotError):
    status = "unbounded"


class DegenerateSolutionWarning(RuntimeWarning):
    pass


def _as_cost(cost):
    return cost if isinstance(cost, CostMatrix) else CostMatrix(cost)


def _check_shapes(mu, nu, cost, m):
    n, k = _weights(mu).size, _weights(nu).size
    if cost.shape != (n, k) or _mass_entries(m).shape != (n, k):
        raise ValueError(
            f"dimension mismatch: mu {n}, nu {k}, cost {cost.shape}, m {_mass_entries(m).shape}"
        )
    empty = np.flatnonzero(~cost.mask.any(axis=1))
    if empty.size:
        raise EmptyRowError(f"source points {empty.tolist()} have no admissible destination")


def variable_pairs(cost):
    """(rows, cols) of the plan variables, in LP column order."""
    rows, cols = np.nonzero(_as_cost(cost).mask)
    return rows, cols


def _plan_block(mu, nu, cost, m):
    cost = _as_cost(cost)
    _check_shapes(mu, nu, cost, m)
    mw, me = _weights(mu), _mass_entries(m)
    n, k = cost.shape
    rows, cols = variable_pairs(cost)
    nv = rows.size
    A = np.zeros((n + k, nv))
    A[rows, np.arange(nv)] = 1.0
    A[n + cols, np.arange(nv)] = me[rows, cols]
    return A, cost.entries[rows, cols], mw, rows, cols


def build_ncot_lp(mu, nu, cost, m):
    """LP over the admissible plan entries and ``Z`` (last column)."""
    A, c, mw, _, _ = _plan_block(mu, nu, cost, m)
    n = mw.size
    zcol = np.zeros((A.shape[0], 1))
    zcol[n:, 0] = -_weights(nu)
    A = np.hstack([A, zcol])
    b = np.concatenate([mw, np.zeros(_weights(nu).size)])
    return LinearProgram(np.append(c, 0.0), A, b)


@dataclass
class NcotSolution:
    plan: TransportPlan
    optimal_value: float
    retained_mass: float
    lp_dual: np.ndarray
    status: str = "optimal"

    @property
    def row_duals(self):
        return self.lp_dual[: self.plan.shape[0]]

    @property
    def col_duals(self):
        return self.lp_dual[self.plan.shape[0]:]

    def to_dict(self):
        return {
            "plan": self.plan.entries.tolist(),
            "Z": self.retained_mass,
            "value": self.optimal_value,
            "status": self.status,
        }


def _scatter(x, rows, cols, shape):
    p = np.zeros(shape)
    p[rows, cols] = x[: rows.size]
    return p


def solve_ncot(mu, nu, cost, m, tol=None):
    """Minimise ``sum(c * pi)`` over non-conservative plans.

    Raises
    ------
    InfeasibleProblemError
        No plan satisfies the marginal conditions.
    UnboundedProblemError
        Only reachable with negative costs; reported rather than clipped.
    """
    cost = _as_cost(cost)
    lp = build_ncot_lp(mu, nu, cost, m)
    sol = solve_lp(lp) if tol is None else solve_lp(lp, feas_tol=tol)
    if sol.status is LpStatus.INFEASIBLE:
        raise InfeasibleProblemError("no non-conservative plan matches (mu, nu, m)")
    if sol.status is LpStatus.UNBOUNDED:
        raise UnboundedProblemError("objective unbounded below (negative costs?)")
    rows, cols = variable_pairs(cost)
    p = _scatter(sol.primal, rows, cols, cost.shape)
    # renormalise away round-off so the plan carries total mass exactly 1
    p /= p.sum()
    me = _mass_entries(m)
    z = float((me * p).sum())
    if z <= DEGENERATE_Z:
        warnings.warn(
            f"optimal retained mass Z={z:.3e} is degenerate; the target shape is not realised",
            DegenerateSolutionWarning,
            stacklevel=2,
        )
    value = float((cost.finite() * p).sum())
    return NcotSolution(TransportPlan(p, z), value, z, sol.dual)


@dataclass
class FixedMassSolution:
    mass: float
    value: float
    plan: np.ndarray


def solve_fixed_mass_plan(mu, nu, mass, cost, m):
    """Fixed-``Z`` semi-coupling LP; returns value and plan."""
    if not mass > 0:
        raise ValueError("retained mass must be positive")
    cost = _as_cost(cost)
    A, c, mw, rows, cols = _plan_block(mu, nu, cost, m)
    b = np.concatenate([mw, mass * _weights(nu)])
    sol = solve_lp(LinearProgram(c, A, b))
    if sol.status is LpStatus.INFEASIBLE:
        raise InfeasibleProblemError(f"no plan retains mass Z={mass:.17g}")
    if sol.status is LpStatus.UNBOUNDED:
        raise UnboundedProblemError("objective unbounded below (negative costs?)")
    return FixedMassSolution(float(mass), sol.objective_value, _scatter(sol.primal, rows, cols, cost.shape))


def solve_fixed_mass(mu, nu, mass, cost, m):
    """Optimal cost when the retained mass is pinned to ``mass``.

    This is the unbalanced semi-coupling problem whose cost is ``c`` on pairs
    with ``pi_1 = m * pi_0`` and infinite otherwise; minimising over ``mass``
    recovers the non-conservative optimum.
    """
    return solve_fixed_mass_plan(mu, nu, mass, cost, m).value


def feasible_mass_interval(mu, cost, m):
    """Range of ``sum(m * pi)`` over plans with first marginal ``mu``.

    Any ``Z`` outside this interval is infeasible for the fixed-mass problem.
    Computed with two auxiliary LPs (maximise and minimise the retained mass).
    """
    cost = _as_cost(cost)
    mw, me = _weights(mu), _mass_entries(m)
    rows, cols = variable_pairs(cost)
    nv = rows.size
    A = np.zeros((mw.size, nv))
    A[rows, np.arange(nv)] = 1.0
    w = me[rows, cols]
    lo = solve_lp(LinearProgram(w, A, mw))
    hi = solve_lp(LinearProgram(-w, A, mw))
    return lo.objective_value, -hi.objective_value


@dataclass
class SweepResult:
    entries: list  # (Z, value or None) in grid order

    @property
    def feasible(self):
        return [(z, v) for z, v in self.entries if v is not None]

    @property
    def best(self):
        """``(Z, value)`` minimising over feasible grid entries, or ``None``."""
        feas = self.feasible
        if not feas:
            return None
        return min(feas, key=lambda zv: zv[1])

    @property
    def status(self):
        return "ok" if self.feasible else "all-infeasible"

    def to_dict(self):
        best = self.best
        return {
            "status": self.status,
            "grid": [{"Z": z, "value": v, "feasible": v is not None} for z, v in self.entries],
            "best": None if best is None else {"Z": best[0], "value": best[1]},
        }


def sweep_mass_scales(mu, nu, cost, m, grid):
    """Fixed-mass values over a grid of retained masses; infeasible entries give ``None``."""
    grid = [float(z) for z in grid]
    if not grid:
        raise ValueError("Z grid must be nonempty")
    if any(z <= 0 for z in grid):
        raise ValueError("Z grid entries must be positive")
    out = []
    for z in grid:
        try:
            out.append((z, solve_fixed_mass(mu, nu, z, cost, m)))
        except InfeasibleProblemError:
            out.append((z, None))
    return SweepResult(out)


__all__ = [
    "DiscreteMeasure",
    "MassChangeMatrix",
    "build_ncot_lp",
    "solve_ncot",
    "solve_fixed_mass",
    "solve_fixed_mass_plan",
    "feasible_mass_interval",
    "sweep_mass_scales",
    "NcotSolution",
    "SweepResult",
]
