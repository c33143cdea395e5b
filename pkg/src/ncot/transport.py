"""Measures, cost and mass-change matrices, transport plans and their checks.

A non-conservative plan ``pi`` must reproduce the source weights along rows
and, after weighting by the mass-change factor, be proportional to the target
weights along columns::

    pi.sum(axis=1) == mu
    (m * pi).sum(axis=0) == Z * nu,   Z = (m * pi).sum()
"""
from dataclasses import dataclass

import numpy as np

PROB_TOL = 1e-12
FEAS_TOL = 1e-9


class DegenerateMassError(ValueError):
    """Some target with positive weight receives no mass under ``mu``."""


def _as_points(points, size):
    if points is None:
        return np.arange(size)
    arr = np.asarray(points)
    if arr.dtype.kind in "iuf":
        arr = arr.astype(float) if arr.dtype.kind == "f" else arr
    return arr


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point masses; points are labels or coordinates (``(n,)`` or ``(n, d)``)."""

    points: np.ndarray
    weights: np.ndarray
    probability: bool = True

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        pts = _as_points(self.points, w.size)
        if len(pts) != w.size:
            raise ValueError(f"{len(pts)} points but {w.size} weights")
        if not np.isfinite(w).all() or (w < 0).any():
            raise ValueError("weights must be finite and nonnegative")
        if self.probability and abs(w.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probability weights sum to {w.sum():.17g}, not 1")
        keys = [tuple(np.atleast_1d(p).tolist()) for p in pts]
        if len(set(keys)) != len(keys):
            raise ValueError("points must be distinct")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_weights(cls, weights, points=None, normalize=False):
        w = np.asarray(weights, dtype=float)
        if normalize:
            w = w / w.sum()
        return cls(points, w)

    def __len__(self):
        return self.weights.size

    @property
    def coords(self):
        """Points as a float ``(n, d)`` array (only for coordinate measures)."""
        pts = np.asarray(self.points, dtype=float)
        return pts.reshape(len(self), -1)


@dataclass(frozen=True)
class CostMatrix:
    """Costs with an admissibility mask; masked-out entries are stored as ``inf``."""

    entries: np.ndarray
    mask: np.ndarray = None

    def __post_init__(self):
        c = np.array(self.entries, dtype=float)
        if c.ndim != 2:
            raise ValueError("cost matrix must be 2-D")
        mask = np.isfinite(c) if self.mask is None else np.asarray(self.mask, dtype=bool)
        if mask.shape != c.shape:
            raise ValueError(f"mask shape {mask.shape} != cost shape {c.shape}")
        if not np.isfinite(c[mask]).all():
            raise ValueError("admissible (masked-in) cost entries must be finite")
        c[~mask] = np.inf
        c.setflags(write=False)
        mask = mask.copy()
        mask.setflags(write=False)
        object.__setattr__(self, "entries", c)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self):
        return self.entries.shape

    def finite(self, fill=0.0):
        """Entries with masked-out pairs replaced by ``fill`` (for arithmetic)."""
        return np.where(self.mask, self.entries, fill)


@dataclass(frozen=True)
class MassChangeMatrix:
    entries: np.ndarray

    def __post_init__(self):
        m = np.array(self.entries, dtype=float)
        if m.ndim != 2:
            raise ValueError("mass-change matrix must be 2-D")
        if not np.isfinite(m).all() or (m < 0).any():
            raise ValueError("mass-change factors must be finite and nonnegative")
        m.setflags(write=False)
        object.__setattr__(self, "entries", m)

    @property
    def shape(self):
        return self.entries.shape

    @classmethod
    def ones(cls, n, k):
        return cls(np.ones((n, k)))


@dataclass(frozen=True)
class TransportPlan:
    entries: np.ndarray
    retained_mass: float

    def __post_init__(self):
        p = np.array(self.entries, dtype=float)
        if p.ndim != 2:
            raise ValueError("plan must be 2-D")
        if (p < 0).any() or not np.isfinite(p).all():
            raise ValueError("plan entries must be finite and nonnegative")
        if abs(p.sum() - 1.0) > FEAS_TOL:
            raise ValueError(f"plan total mass {p.sum():.17g} is not 1")
        # Z == 0 is representable so degenerate optima can be reported; such a
        # plan never passes check_plan_feasibility
        if not self.retained_mass >= 0:
            raise ValueError("retained mass Z must be nonnegative")
        p.setflags(write=False)
        object.__setattr__(self, "entries", p)
        object.__setattr__(self, "retained_mass", float(self.retained_mass))

    @classmethod
    def from_entries(cls, entries, mass_change):
        """Build a plan and compute its retained mass ``Z = sum(m * pi)``."""
        p = np.asarray(entries, dtype=float)
        m = _mass_entries(mass_change)
        return cls(p, float((m * p).sum()))

    @property
    def shape(self):
        return self.entries.shape


def _mass_entries(m):
    return m.entries if isinstance(m, MassChangeMatrix) else np.asarray(m, dtype=float)


def _weights(meas):
    return meas.weights if isinstance(meas, DiscreteMeasure) else np.asarray(meas, dtype=float)


@dataclass(frozen=True)
class FeasibilityReport:
    row_residuals: np.ndarray
    col_residuals: np.ndarray
    retained_mass: float
    retained_mass_error: float
    is_feasible: bool

    @property
    def max_residual(self):
        return float(max(np.abs(self.row_residuals).max(initial=0.0),
                         np.abs(self.col_residuals).max(initial=0.0)))


def check_plan_feasibility(plan, mu, nu, m, tol=FEAS_TOL):
    """Residuals of ``plan`` against the two marginal conditions.

    Row residuals are ``pi.sum(1) - mu``; column residuals are
    ``(m*pi).sum(0) - Z*nu`` with ``Z`` recomputed from the plan. The stored
    retained mass of a :class:`TransportPlan` must agree with the recomputed one.
    """
    p = plan.entries if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    mw, nw, me = _weights(mu), _weights(nu), _mass_entries(m)
    if p.shape != (mw.size, nw.size) or me.shape != p.shape:
        raise ValueError(
            f"dimension mismatch: plan {p.shape}, mu {mw.size}, nu {nw.size}, m {me.shape}"
        )
    rows, weighted = classical_marginals(p, me)
    z = float(weighted.sum())
    row_res = rows - mw
    col_res = weighted - z * nw
    stored = plan.retained_mass if isinstance(plan, TransportPlan) else z
    z_err = abs(stored - z)
    ok = (
        np.abs(row_res).max(initial=0.0) <= tol
        and np.abs(col_res).max(initial=0.0) <= tol
        and z_err <= tol
        and z > 0
    )
    return FeasibilityReport(row_res, col_res, z, z_err, bool(ok))


def classical_marginals(plan, m):
    """Row sums and raw mass-weighted column sums of a plan."""
    p = plan.entries if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    return p.sum(axis=1), (_mass_entries(m) * p).sum(axis=0)


def feasible_product_plan(mu, nu, m):
    """The product plan ``mu (x) nu~`` with ``nu~_j`` proportional to ``nu_j / (m^T mu)_j``."""
    mw, nw, me = _weights(mu), _weights(nu), _mass_entries(m)
    eff = mw @ me
    bad = (eff <= 0) & (nw > 0)
    if bad.any():
        raise DegenerateMassError(
            f"targets {np.flatnonzero(bad).tolist()} have positive weight but zero "
            "effective incoming mass; the feasible set may be empty"
        )
    with np.errstate(divide="ignore", invalid="ignore"):
        tilde = np.where(nw > 0, nw / np.where(eff > 0, eff, 1.0), 0.0)
    tilde /= tilde.sum()
    p = np.outer(mw, tilde)
    return TransportPlan(p, float((me * p).sum()))
