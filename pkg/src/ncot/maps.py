"""Deterministic transport maps: extraction from plans and pointwise solves
of the first-order (characteristic) equations.

For cost ``h(|x - y|)`` and mass factor ``m(x, y)`` an optimal pair ``(x, y)``
satisfies ``grad_x c - grad phi - (c - phi) grad_x log m = 0``. Two regimes
give closed or scalar forms for ``y`` given ``x``, ``phi(x)`` and
``grad phi(x)``:

* quadratic leaky transport, ``c = |x-y|^2 / 2``, ``m = 1 - k |x-y|^2 / 2``,
  reduces to a scalar quadratic in the step length;
* ``c = h(|x-y|)``, ``m = exp(-k d(|x-y|))`` with small ``k`` reduces to a
  monotone scalar equation solved by bisection.
"""
from dataclasses import dataclass, field
import math
import warnings

import numpy as np

from .transport import TransportPlan, _mass_entries, _weights

Z_TOL = 1e-12


class MapError(ValueError):
    pass


class PreconditionError(MapError):
    pass


class BracketError(MapError):
    pass


class ThresholdWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# map types


@dataclass(frozen=True)
class TransportMap:
    """Target index per source index (``-1`` off the support of ``mu``).

    ``exceptions`` lists rows whose mass was split in the plan; for those the
    heaviest column was used.
    """

    assignment: np.ndarray
    direction: str = "primal"
    exceptions: tuple = ()

    def to_plan(self, mu, mass_change=None):
        """The plan ``(Id, T)#mu``; its retained mass uses ``mass_change`` when given."""
        mw = _weights(mu)
        k = int(self.assignment.max()) + 1 if mass_change is None else _mass_entries(mass_change).shape[1]
        p = np.zeros((mw.size, k))
        on = self.assignment >= 0
        p[np.flatnonzero(on), self.assignment[on]] = mw[on]
        z = 1.0 if mass_change is None else float((_mass_entries(mass_change) * p).sum())
        return TransportPlan(p, z)

    def to_dict(self):
        return {"assignment": self.assignment.tolist(), "direction": self.direction}


@dataclass(frozen=True)
class DualTransportMap:
    """Source index per target index, with the reweighted measure ``lambda``."""

    assignment: np.ndarray
    lambda_weights: np.ndarray
    direction: str = "dual"
    exceptions: tuple = ()

    def to_dict(self):
        return {
            "assignment": self.assignment.tolist(),
            "direction": self.direction,
            "lambda": self.lambda_weights.tolist(),
        }


@dataclass(frozen=True)
class NotAMap:
    """Rows (or columns, for dual extraction) whose mass is split."""

    indices: tuple
    axis: str = "row"

    def __bool__(self):
        return False

    def to_dict(self):
        return {"not_a_map": True, "axis": self.axis, "split": list(self.indices)}


def _plan_entries(plan):
    return plan.entries if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)


def _single_support(mat, weight, tol):
    """Argmax per row and the rows (weight > tol) whose argmax holds < 1 - tol of the row."""
    arg = np.argmax(mat, axis=1)
    top = mat[np.arange(mat.shape[0]), arg]
    total = mat.sum(axis=1)
    live = weight > tol
    split = live & (top < (1.0 - tol) * total)
    arg = np.where(live, arg, -1)
    return arg, np.flatnonzero(split)


def extract_map_from_plan(plan, tol=1e-6, max_exceptions=0):
    """Read a map off a plan whose rows each sit on one column.

    Parameters
    ----------
    plan : TransportPlan or array
    tol : float
        A row with mass above ``tol`` must keep at least ``1 - tol`` of it in
        one column.
    max_exceptions : int
        Number of split rows tolerated. Cells that straddle the interface
        between two target cells split legitimately on a finite grid; they
        are mapped to their heaviest column and listed in ``exceptions``.

    Returns
    -------
    TransportMap or NotAMap
    """
    p = _plan_entries(plan)
    arg, split = _single_support(p, p.sum(axis=1), tol)
    if split.size > max_exceptions:
        return NotAMap(tuple(int(i) for i in split), "row")
    return TransportMap(arg.astype(np.int64), "primal", tuple(int(i) for i in split))


def extract_dual_map_from_plan(plan, m, nu, tol=1e-6, max_exceptions=0):
    """Column-wise analogue using the mass-weighted plan ``m * pi``.

    ``lambda_j`` is proportional to ``nu_j / m(S(j), j)`` and sums to 1.
    """
    p = _plan_entries(plan)
    me = _mass_entries(m)
    nw = _weights(nu)
    weighted = (me * p).T
    arg, split = _single_support(weighted, nw, tol)
    if split.size > max_exceptions:
        return NotAMap(tuple(int(j) for j in split), "col")
    on = arg >= 0
    lam = np.zeros(nw.size)
    lam[on] = nw[on] / me[arg[on], np.flatnonzero(on)]
    lam /= lam.sum()
    return DualTransportMap(arg.astype(np.int64), lam, "dual", tuple(int(j) for j in split))


@dataclass(frozen=True)
class PushforwardReport:
    pushed: np.ndarray
    retained_mass: float
    deviation: float  # total variation, half the l1 distance
    max_abs: float

    def within(self, bound):
        return self.deviation <= bound


def map_pushforward_check(tmap, mu, nu, m):
    """Compare ``T#(m(., T(.)) mu) / Z`` with ``nu``."""
    mw, nw, me = _weights(mu), _weights(nu), _mass_entries(m)
    a = tmap.assignment
    on = a >= 0
    if np.any(~on & (mw > 0)):
        raise MapError("map is not defined on the whole support of mu")
    rows = np.flatnonzero(on)
    mass = mw[rows] * me[rows, a[rows]]
    pushed = np.bincount(a[rows], weights=mass, minlength=nw.size)
    z = float(pushed.sum())
    pushed = pushed / z
    diff = np.abs(pushed - nw)
    return PushforwardReport(pushed, z, float(0.5 * diff.sum()), float(diff.max()))


# --------------------------------------------------------------------------
# grid potentials


@dataclass(frozen=True)
class GridPotential:
    """Potential values on a tensor grid in one or two dimensions with finite-difference gradients.

    Interior points use central differences; boundary points use one-sided
    second-order stencils (``numpy.gradient`` with ``edge_order=2``). In 1-D,
    optional ``pieces`` labels restrict each stencil to one label, which keeps
    gradients exact for potentials that are smooth only piecewise.
    """

    axes: tuple
    values: np.ndarray
    gradient: np.ndarray = field(default=None)
    boundary: np.ndarray = field(default=None)

    @classmethod
    def from_values(cls, axes, values, pieces=None):
        if isinstance(axes, np.ndarray) and axes.ndim == 1:
            axes = (axes,)
        axes = tuple(np.asarray(ax, dtype=float) for ax in axes)
        vals = np.asarray(values, dtype=float).reshape([ax.size for ax in axes])
        if len(axes) not in (1, 2):
            raise ValueError("grid potentials are supported in one or two dimensions")
        if pieces is not None:
            if len(axes) != 1:
                raise ValueError("piecewise stencils are only available in 1-D")
            grad, bnd = _piecewise_gradient_1d(axes[0], vals, np.asarray(pieces))
            grad = grad[:, None]
        else:
            if len(axes) == 1:
                grad = np.gradient(vals, axes[0], edge_order=2)[:, None]
            else:
                gx, gy = np.gradient(vals, *axes, edge_order=2)
                grad = np.stack([gx, gy], axis=-1)
            bnd = np.zeros(vals.shape, dtype=bool)
            for d in range(len(axes)):
                idx = [slice(None)] * len(axes)
                idx[d] = 0
                bnd[tuple(idx)] = True
                idx[d] = -1
                bnd[tuple(idx)] = True
        return cls(axes, vals, grad, bnd)

    @property
    def dim(self):
        return len(self.axes)

    @property
    def points(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([g.reshape(-1) for g in mesh], axis=-1)

    def flat_gradient(self):
        return self.gradient.reshape(-1, self.dim)


def _piecewise_gradient_1d(x, f, pieces):
    """Finite differences that never straddle a change of label."""
    n = x.size
    grad = np.empty(n)
    bnd = np.zeros(n, dtype=bool)
    for i in range(n):
        left = i > 0 and pieces[i - 1] == pieces[i]
        right = i < n - 1 and pieces[i + 1] == pieces[i]
        if left and right:
            h0, h1 = x[i] - x[i - 1], x[i + 1] - x[i]
            # three-point formula on a possibly uneven stencil
            grad[i] = (
                -h1 / (h0 * (h0 + h1)) * f[i - 1]
                + (h1 - h0) / (h0 * h1) * f[i]
                + h0 / (h1 * (h0 + h1)) * f[i + 1]
            )
            continue
        bnd[i] = True
        if right:
            j = [i, i + 1, i + 2] if (i + 2 < n and pieces[i + 2] == pieces[i]) else [i, i + 1]
        elif left:
            j = [i, i - 1, i - 2] if (i - 2 >= 0 and pieces[i - 2] == pieces[i]) else [i, i - 1]
        else:
            grad[i] = np.nan  # isolated cell, no same-piece neighbour
            continue
        if len(j) == 2:
            grad[i] = (f[j[1]] - f[j[0]]) / (x[j[1]] - x[j[0]])
        else:
            # derivative at x[j0] of the quadratic through the three points
            x0, x1, x2 = x[j]
            f0, f1, f2 = f[j]
            grad[i] = (
                f0 * (2 * x0 - x1 - x2) / ((x0 - x1) * (x0 - x2))
                + f1 * (x0 - x2) / ((x1 - x0) * (x1 - x2))
                + f2 * (x0 - x1) / ((x2 - x0) * (x2 - x1))
            )
    return grad, bnd


# --------------------------------------------------------------------------
# pointwise map solves


def quadratic_leaky_residual(x, y, phi_x, grad_phi_x, k):
    """``(x - y)(1 - k phi) - (1 - k|x-y|^2/2) grad phi`` as an array."""
    x, y, g = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (x, y, grad_phi_x))
    d2 = float(((x - y) ** 2).sum())
    return (x - y) * (1.0 - k * phi_x) - (1.0 - 0.5 * k * d2) * g


def quadratic_leaky_map_solve(x, phi_x, grad_phi_x, k, diameter=None):
    """Target of ``x`` for ``c = |x-y|^2/2`` and ``m = 1 - k|x-y|^2/2``.

    With ``y = x - z grad phi`` the first-order condition becomes
    ``a z^2 + b z - 1 = 0``, ``a = k |grad phi|^2 / 2``, ``b = 1 - k phi(x)``.
    The positive root is taken in the cancellation-free form
    ``z = 2 / (b + sqrt(b^2 + 4a))``; it is the only root with ``m(x, y) > 0``.

    Raises
    ------
    PreconditionError
        If ``1 - k phi(x) <= 0``, if ``k diameter^2 / 2 >= 1`` when a diameter
        is given, or if the computed target has ``m(x, y) <= 0``.
    """
    if k < 0:
        raise PreconditionError(f"k must be nonnegative, got {k}")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.atleast_1d(np.asarray(grad_phi_x, dtype=float))
    b = 1.0 - k * phi_x
    if not b > 0:
        raise PreconditionError(f"1 - k*phi(x) = {b:.6g} must be positive")
    if diameter is not None and not 0.5 * k * diameter ** 2 < 1.0:
        raise PreconditionError(
            f"k*diameter^2/2 = {0.5 * k * diameter ** 2:.6g} must be below 1 (mass factor stays positive)"
        )
    g2 = float(g @ g)
    if g2 == 0.0:
        return x.copy()
    a = 0.5 * k * g2
    z = 2.0 / (b + math.sqrt(b * b + 4.0 * a))
    y = x - z * g
    if not 1.0 - 0.5 * k * z * z * g2 > 0:
        raise PreconditionError("computed target has nonpositive mass factor m(x, y)")
    return y


def perturbative_threshold(eps, h, diameter, samples=2001):
    """Sufficient bound ``eps / (2 sup|h|)`` on ``k`` for a monotone scalar equation.

    ``sup|h|`` is taken over ``[0, diameter]`` on a uniform sample. The true
    admissible range may be larger; this is only the sufficient condition.
    """
    t = np.linspace(0.0, diameter, samples)
    h_sup = float(np.max(np.abs([h(s) for s in t])))
    return math.inf if h_sup == 0.0 else eps / (2.0 * h_sup)


def perturbative_map_solve(x, phi_x, grad_phi_x, h, d, k, diameter, eps=None, xtol=Z_TOL):
    """Target of ``x`` for ``c = h(|x-y|)``, ``m = exp(-k d(|x-y|))``.

    Solves ``F(z) = h'(z) + k d'(z) (h(z) - phi(x)) = |grad phi|`` for
    ``z`` in ``[0, diameter]`` by bisection and returns
    ``y = x - z grad phi / |grad phi|``.

    Parameters
    ----------
    h, d : tuple of callables
        ``(f, f')`` for the cost and loss generators.
    eps : float, optional
        Domination constant with ``h' > eps d'`` and ``h'' > eps d''``. When
        given, ``k`` above :func:`perturbative_threshold` triggers a warning.
    """
    h_f, h_d = h
    d_f, d_d = d
    x = np.atleast_1d(np.asarray(x, dtype=float))
    g = np.atleast_1d(np.asarray(grad_phi_x, dtype=float))
    gn = float(np.sqrt(g @ g))
    if gn == 0.0:
        return x.copy()
    if eps is not None:
        thr = perturbative_threshold(eps, h_f, diameter)
        if k >= thr:
            warnings.warn(
                f"k={k:g} is at or above the sufficient threshold {thr:.6g}; "
                "uniqueness of the target is not guaranteed",
                ThresholdWarning,
                stacklevel=2,
            )

    def resid(z):
        return h_d(z) + k * d_d(z) * (h_f(z) - phi_x) - gn

    lo, hi = 0.0, float(diameter)
    r_lo, r_hi = resid(lo), resid(hi)
    if r_hi < 0:
        raise BracketError(
            f"|grad phi| = {gn:.6g} exceeds F(diameter) = {r_hi + gn:.6g}; target lies outside the domain"
        )
    if r_lo > 0:
        raise BracketError(f"F(0) = {r_lo + gn:.6g} already exceeds |grad phi| = {gn:.6g}")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if resid(mid) > 0:
            hi = mid
        else:
            lo = mid
    z = 0.5 * (lo + hi)
    return x - z * g / gn
