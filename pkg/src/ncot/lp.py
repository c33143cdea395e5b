"""Dense two-phase primal simplex for ``min c@x  s.t.  A@x = b, x >= 0``.

Pivoting follows Bland's rule (lowest eligible index enters, lowest basic
index wins ratio ties), so degenerate transport polytopes cannot cycle. The
final basis is refactorized from the original data, which makes the returned
primal/dual pair accurate to roughly machine precision regardless of how much
round-off the tableau accumulated.
"""
from dataclasses import dataclass, field
import enum
import logging

import numpy as np

from . import kernels

log = logging.getLogger(__name__)

FEAS_TOL = 1e-9
GAP_TOL = 1e-8
_PIV_TOL = 1e-11
_OPT_TOL = 1e-11


class LpError(Exception):
    pass


class DimensionMismatchError(LpError, ValueError):
    pass


class IterationLimitError(LpError, RuntimeError):
    pass


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    objective: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=float).reshape(-1)
        A = np.asarray(self.eq_matrix, dtype=float)
        b = np.asarray(self.eq_rhs, dtype=float).reshape(-1)
        if A.ndim != 2:
            raise DimensionMismatchError(f"eq_matrix must be 2-D, got shape {A.shape}")
        if A.shape != (b.size, c.size):
            raise DimensionMismatchError(
                f"eq_matrix {A.shape} does not match rhs ({b.size}) x objective ({c.size})"
            )
        if not (np.isfinite(A).all() and np.isfinite(b).all() and np.isfinite(c).all()):
            raise ValueError("LinearProgram entries must be finite; mask infinite costs upstream")
        object.__setattr__(self, "objective", c)
        object.__setattr__(self, "eq_matrix", A)
        object.__setattr__(self, "eq_rhs", b)

    @property
    def var_count(self):
        return self.objective.size

    @property
    def constraint_count(self):
        return self.eq_rhs.size


@dataclass
class LpSolution:
    status: LpStatus
    primal: np.ndarray = None
    dual: np.ndarray = None
    objective_value: float = np.nan
    basis: tuple = ()
    iterations: int = 0
    dropped_rows: tuple = field(default_factory=tuple)

    @property
    def optimal(self):
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    """Tableau with the reduced-cost row stored last and the rhs column last."""

    def __init__(self, A, b, trace=None):
        m, n = A.shape
        self.m, self.n = m, n
        tab = np.zeros((m + 1, n + m + 1))
        tab[:m, :n] = A
        tab[:m, n:n + m] = np.eye(m)
        tab[:m, -1] = b
        self.tab = tab
        self.basis = np.arange(n, n + m, dtype=np.int64)
        self.rows = np.arange(m)  # original row index of each tableau row
        self.iterations = 0
        self.trace = trace

    @property
    def ncols(self):
        return self.tab.shape[1] - 1

    def set_cost(self, cost):
        """Install reduced costs ``cost - c_B B^{-1} A`` for a full-width cost vector."""
        cost = np.asarray(cost, dtype=float)
        row = np.zeros(self.tab.shape[1])
        row[:cost.size] = cost
        for i, bj in enumerate(self.basis):
            if row[bj] != 0.0:
                row -= row[bj] * self.tab[i]
        self.tab[-1] = row

    def pivot(self, r, s):
        if self.trace is not None:
            self.trace.write(
                f"it={self.iterations} enter={s} leave={int(self.basis[r])} "
                f"row={r} obj={-self.tab[-1, -1]:.17g}\n"
            )
        kernels.pivot(self.tab, r, s)
        self.basis[r] = s
        self.iterations += 1

    def run(self, allowed, max_iter):
        """Iterate Bland pivots; returns 'optimal' or 'unbounded'."""
        tab = self.tab
        while True:
            if self.iterations >= max_iter:
                raise IterationLimitError(
                    f"simplex exceeded {max_iter} pivots; anti-cycling safeguard tripped"
                )
            s = kernels.bland_entering(tab[-1, :-1], allowed, _OPT_TOL)
            if s < 0:
                return "optimal"
            r = kernels.bland_leaving(tab[:-1, s], tab[:-1, -1], self.basis, _PIV_TOL)
            if r < 0:
                return "unbounded"
            self.pivot(r, s)

    def drop_row(self, r):
        keep = np.ones(self.tab.shape[0], dtype=bool)
        keep[r] = False
        self.tab = self.tab[keep]
        self.basis = np.delete(self.basis, r)
        self.rows = np.delete(self.rows, r)
        self.m -= 1


def _refine(A, b, c, basis, feas_tol):
    """Recompute x_B and y from the original data for the final basis."""
    B = A[:, basis]
    x = np.zeros(A.shape[1])
    xb = np.linalg.solve(B, b)
    # one step of iterative refinement; bases here are small and well scaled
    xb += np.linalg.solve(B, b - B @ xb)
    xb[np.abs(xb) <= feas_tol * (1.0 + np.abs(b).max(initial=0.0))] = 0.0
    x[basis] = xb
    y = np.linalg.solve(B.T, c[basis])
    y += np.linalg.solve(B.T, c[basis] - B.T @ y)
    return x, y


def solve_lp(lp, feas_tol=FEAS_TOL, max_iter=None, trace=None):
    """Solve ``lp`` and classify it as optimal, infeasible or unbounded.

    Parameters
    ----------
    lp : LinearProgram
    feas_tol : float
        Phase-one threshold on the sum of artificials and the clipping level
        for tiny primal entries.
    max_iter : int, optional
        Pivot budget per phase. Bland's rule terminates well within the
        default; the limit only guards against numerical pathologies.
    trace : file-like, optional
        Receives one plain-text line per pivot (debug dump of the trajectory).
    """
    if not isinstance(lp, LinearProgram):
        raise TypeError("solve_lp expects a LinearProgram")
    A0, b0, c0 = lp.eq_matrix, lp.eq_rhs, lp.objective
    m, n = A0.shape
    if max_iter is None:
        max_iter = 50_000 + 200 * (m + n)

    if m == 0:
        if np.any(c0 < -_OPT_TOL):
            return LpSolution(LpStatus.UNBOUNDED)
        return LpSolution(LpStatus.OPTIMAL, np.zeros(n), np.zeros(0), 0.0)

    # global rescaling to max |A| = 1, max |c| = 1; x is unchanged, duals are
    # unscaled on exit
    a_scale = np.abs(A0).max() or 1.0
    c_scale = np.abs(c0).max() or 1.0
    sign = np.where(b0 < 0, -1.0, 1.0)
    A = A0 * sign[:, None] / a_scale
    b = b0 * sign / a_scale
    c = c0 / c_scale

    tb = _Tableau(A, b, trace=trace)
    n_all = tb.ncols

    # phase one: minimise the sum of artificials
    phase1 = np.zeros(n_all)
    phase1[n:] = 1.0
    tb.set_cost(phase1)
    allowed = np.ones(n_all, dtype=np.bool_)
    tb.run(allowed, max_iter)
    infeas = -tb.tab[-1, -1]
    if infeas > feas_tol * (1.0 + np.abs(b).max()):
        log.debug("phase one ended with artificial mass %.3e", infeas)
        return LpSolution(LpStatus.INFEASIBLE, iterations=tb.iterations)

    # drive zero-level artificials out of the basis; rows with no pivot
    # candidate among structural columns are linearly redundant
    dropped = []
    i = 0
    while i < tb.m:
        if tb.basis[i] >= n:
            cand = np.flatnonzero(np.abs(tb.tab[i, :n]) > 1e-9)
            if cand.size:
                tb.pivot(i, int(cand[0]))
            else:
                dropped.append(int(tb.rows[i]))
                tb.drop_row(i)
                continue
        i += 1

    # phase two on structural columns only
    tb.tab = np.ascontiguousarray(np.delete(tb.tab, np.s_[n:n_all], axis=1))
    allowed = np.ones(n, dtype=np.bool_)
    tb.set_cost(c)
    it1 = tb.iterations
    tb.iterations = 0
    outcome = tb.run(allowed, max_iter)
    iterations = it1 + tb.iterations
    if outcome == "unbounded":
        return LpSolution(LpStatus.UNBOUNDED, iterations=iterations)

    rows = tb.rows
    basis = tb.basis.copy()
    x, y_rows = _refine(A[rows], b[rows], c, basis, feas_tol)
    y = np.zeros(m)
    y[rows] = y_rows
    # unscale: A' = S A / a, c' = c / cs  ->  y = S y' cs / a
    y = y * sign * c_scale / a_scale
    x = np.maximum(x, 0.0)
    value = float(c0 @ x)
    return LpSolution(
        LpStatus.OPTIMAL,
        primal=x,
        dual=y,
        objective_value=value,
        basis=tuple(int(j) for j in basis),
        iterations=iterations,
        dropped_rows=tuple(sorted(dropped)),
    )
