"""Dual potentials for non-conservative transport.

A pair ``(phi, psi)`` is admissible when, on every masked-in pair,

    c[i, j] >= phi[i] + (psi[j] - <psi, nu>) * m[i, j]

and then ``<phi, mu>`` is a lower bound for the primal optimum. The module
provides the two transforms that tighten a pair, the shift that makes
``psi`` mean-free under ``nu``, a dual ascent that alternates them, and
certificates based on LP multipliers.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from . import kernels
from .lp import LinearProgram, solve_lp
from .solver import EmptyRowError, NcotSolution, _as_cost
from .transport import _mass_entries, _weights

log = logging.getLogger(__name__)

MIN_MASS = 1e-9
MEAN_TOL = 1e-10
BISECT_ITERS = 200


class DualityError(Exception):
    pass


class MassTooSmallError(DualityError, ValueError):
    pass


class BracketError(DualityError, ValueError):
    def __init__(self, integral):
        super().__init__(
            f"k-shift has no nonnegative root: the nu-integral of the raw psi is {integral:.6g} < 0"
        )
        self.integral = integral


class InadmissiblePotentialsError(DualityError, ValueError):
    def __init__(self, violation, pair):
        super().__init__(
            f"potentials violate admissibility by {violation:.3e} at pair {pair}"
        )
        self.violation = violation
        self.pair = pair


@dataclass(frozen=True)
class DualPotentials:
    phi: np.ndarray
    psi: np.ndarray
    psi_nu_mean: float
    k: float = 0.0

    @classmethod
    def make(cls, phi, psi, nu, k=0.0):
        phi = np.asarray(phi, dtype=float).copy()
        psi = np.asarray(psi, dtype=float).copy()
        return cls(phi, psi, float(_weights(nu) @ psi), float(k))

    def value(self, mu):
        """Dual objective ``<phi, mu>``."""
        return float(self.phi @ _weights(mu))

    def to_dict(self):
        return {"phi": self.phi.tolist(), "psi": self.psi.tolist(), "k": self.k}


@dataclass(frozen=True)
class TightSupportSet:
    """Pairs where the admissibility inequality is (numerically) an equality.

    ``row_minimizer[t]`` says whether column ``j`` minimises
    ``f_i(y) = c(i, y) - (psi(y) - <psi,nu>) m(i, y)`` and ``col_minimizer[t]``
    whether row ``i`` minimises ``g_j(x) = (c(x, j) - phi(x)) / m(x, j)``,
    both for the ``t``-th pair.
    """

    pairs: list
    row_minimizer: np.ndarray = field(default=None)
    col_minimizer: np.ndarray = field(default=None)

    def __contains__(self, pair):
        return tuple(pair) in self._lookup

    @property
    def _lookup(self):
        return set(self.pairs)

    def __len__(self):
        return len(self.pairs)

    def as_mask(self, shape):
        out = np.zeros(shape, dtype=bool)
        for i, j in self.pairs:
            out[i, j] = True
        return out


# --------------------------------------------------------------------------
# input handling


def _prepare(cost, m, nu=None):
    cost = _as_cost(cost)
    me = _mass_entries(m)
    if me.shape != cost.shape:
        raise ValueError(f"mass-change shape {me.shape} != cost shape {cost.shape}")
    if (me[cost.mask] < MIN_MASS).any():
        raise MassTooSmallError(
            f"mass-change factors below {MIN_MASS:g} on admissible pairs; the dual theory needs inf m > 0"
        )
    empty = np.flatnonzero(~cost.mask.any(axis=1))
    if empty.size:
        raise EmptyRowError(f"source points {empty.tolist()} have no admissible destination")
    if nu is not None:
        nw = _weights(nu)
        if nw.size != cost.shape[1]:
            raise ValueError(f"nu has {nw.size} points, cost has {cost.shape[1]} columns")
        dead = np.flatnonzero(~cost.mask.any(axis=0) & (nw > 0))
        if dead.size:
            raise EmptyRowError(f"target points {dead.tolist()} have no admissible source")
    c = np.ascontiguousarray(cost.finite(0.0))
    me = np.ascontiguousarray(np.where(cost.mask, me, 1.0))
    mask = np.ascontiguousarray(cost.mask)
    return c, me, mask


def _gct(c, me, mask, psi, nw):
    shifted = np.ascontiguousarray(psi - nw @ psi, dtype=float)
    return kernels.c_transform_kernel(c, me, mask, shifted)


def _psi_raw(c, me, mask, phi):
    return kernels.psi_transform_kernel(c, me, mask, np.ascontiguousarray(phi, dtype=float))


# --------------------------------------------------------------------------
# transforms


def generalized_c_transform(psi, cost, m, nu):
    """``phi[i] = min_j c[i, j] - (psi[j] - <psi, nu>) m[i, j]`` over admissible ``j``.

    Ties are resolved toward the lowest column index (affects only argmins).
    """
    c, me, mask = _prepare(cost, m)
    nw = _weights(nu)
    phi, _ = _gct(c, me, mask, np.asarray(psi, dtype=float), nw)
    return phi


def psi_transform(phi, cost, m):
    """``psi[j] = min_i (c[i, j] - phi[i]) / m[i, j]`` (no normalisation)."""
    c, me, mask = _prepare(cost, m)
    psi, _ = _psi_raw(c, me, mask, phi)
    return psi


def _shift_integral(c, me, mask, phi, nw, k):
    psi, arg = _psi_raw(c, me, mask, phi + k)
    live = nw > 0
    return float(nw[live] @ psi[live]), psi, arg


def normalize_psi(phi, cost, m, nu):
    """Shift ``phi`` by ``k >= 0`` so that the transformed ``psi`` is ``nu``-mean-free.

    Solves ``G(k) = sum_j nu_j min_i (c - phi - k)/m = 0``. ``G`` is strictly
    decreasing and piecewise linear, so bisection is followed by an exact
    solve on the final linear piece.

    Returns
    -------
    k : float
    psi : ndarray
        ``min_i (c - phi - k) / m``, with ``<psi, nu> = 0``.
    phi_shifted : ndarray
        ``phi + k``; the pair ``(phi + k, psi)`` is admissible.

    Raises
    ------
    BracketError
        If ``G(0) < 0``.
    """
    c, me, mask = _prepare(cost, m, nu)
    nw = _weights(nu)
    phi = np.asarray(phi, dtype=float)
    g0, psi0, arg0 = _shift_integral(c, me, mask, phi, nw, 0.0)
    scale = 1.0 + np.abs(c[mask]).max(initial=0.0) + np.abs(phi).max(initial=0.0)
    if g0 < -MEAN_TOL * scale:
        raise BracketError(g0)
    if g0 <= MEAN_TOL * scale:
        k = 0.0
        psi = psi0
        if abs(g0) > 0:
            k, psi = _polish(c, me, mask, phi, nw, 0.0, arg0)
        return k, psi, phi + k
    m_lo, m_hi = me[mask].min(), me[mask].max()
    hi = c[mask].max() - phi.min() + abs(g0) * m_hi / m_lo
    # G(k) <= G(0) - k / sup m, so this end is always past the root
    hi = max(hi, g0 * m_hi, 0.0)
    lo = 0.0
    for _ in range(BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g, _, _ = _shift_integral(c, me, mask, phi, nw, mid)
        if g > 0:
            lo = mid
        else:
            hi = mid
    _, _, arg = _shift_integral(c, me, mask, phi, nw, hi)
    k, psi = _polish(c, me, mask, phi, nw, hi, arg)
    return k, psi, phi + k


def _polish(c, me, mask, phi, nw, k_bis, arg):
    """Exact root of ``G`` on the linear piece selected by the argmins ``arg``."""
    live = (nw > 0) & (arg >= 0)
    cols = np.flatnonzero(live)
    rows = arg[cols]
    inv = 1.0 / me[rows, cols]
    k_lin = float((nw[cols] * (c[rows, cols] - phi[rows]) * inv).sum() / (nw[cols] * inv).sum())
    best_k, best_g, best_psi = None, np.inf, None
    for k in (k_lin, k_bis):
        if k < 0:
            continue
        g, psi, _ = _shift_integral(c, me, mask, phi, nw, k)
        if abs(g) < best_g:
            best_k, best_g, best_psi = k, abs(g), psi
    return float(best_k), best_psi


# --------------------------------------------------------------------------
# admissibility and bounds


def admissibility_violation(pot, cost, m, nu=None):
    """Largest ``phi + (psi - <psi,nu>) m - c`` over admissible pairs, and its location."""
    c, me, mask = _prepare(cost, m)
    mean = pot.psi_nu_mean if nu is None else float(_weights(nu) @ pot.psi)
    slack = c - pot.phi[:, None] - (pot.psi[None, :] - mean) * me
    viol = np.where(mask, -slack, -np.inf)
    idx = np.unravel_index(int(np.argmax(viol)), viol.shape)
    return float(viol[idx]), (int(idx[0]), int(idx[1]))


def is_admissible(pot, cost, m, nu=None, tol=1e-9):
    c = _as_cost(cost)
    viol, _ = admissibility_violation(pot, c, m, nu)
    return viol <= tol * (1.0 + np.abs(c.finite()).max(initial=0.0))


def potential_bounds(cost, m):
    """Bounds on normalised optimal potentials from ``sup c``, ``inf c``, ``inf m``, ``sup m``.

    Returns ``(phi_lo, phi_hi, psi_lo, psi_hi)``:
    ``phi <= sup c``, ``|psi| <= (sup c - inf c)/inf m`` and
    ``phi >= inf c - (sup c - inf c) sup m / inf m``. They apply to pairs
    where ``psi`` is mean-free, ``phi`` is the c-transform of ``psi`` and
    ``<phi, mu> >= inf c`` (true for optimal pairs and dual ascent output).
    """
    c, me, mask = _prepare(cost, m)
    sup_c, inf_c = c[mask].max(), c[mask].min()
    sup_m, inf_m = me[mask].max(), me[mask].min()
    spread = sup_c - inf_c
    return inf_c - spread * sup_m / inf_m, sup_c, -spread / inf_m, spread / inf_m


def uniform_bound(cost, m):
    """Scalar ``K`` with ``|phi|, |psi| <= K`` for normalised optimal pairs."""
    return float(np.abs(potential_bounds(cost, m)).max())


# --------------------------------------------------------------------------
# LP duals -> potentials, certificates


def potentials_from_lp(solution, cost, m, nu):
    """Admissible potentials from the LP multipliers of :func:`solve_ncot`.

    The LP dual reads ``y_i + m_ij w_j <= c_ij`` with ``<w, nu> >= 0``.
    Setting ``psi = w - <w, nu>`` keeps ``(y, psi)`` admissible; the pair is
    then tightened (c-transform, mean-free shift, c-transform again), which
    can only raise ``<phi, mu>``.
    """
    c, me, mask = _prepare(cost, m, nu)
    nw = _weights(nu)
    n = c.shape[0]
    w = np.asarray(solution.lp_dual, dtype=float)[n:]
    psi = w - nw @ w
    # columns without nu-weight carry arbitrary multipliers; the transform
    # below replaces them by the tightest admissible value
    phi, _ = _gct(c, me, mask, psi, nw)
    k, psi, phi = normalize_psi(phi, cost, m, nu)
    phi, _ = _gct(c, me, mask, psi, nw)
    return DualPotentials.make(phi, psi, nu, k)


def certify_duality(solution, pot, mu, cost, m, nu, tol=1e-9):
    """Duality gap ``optimal_value - <phi, mu>`` of an admissible pair.

    Raises
    ------
    InadmissiblePotentialsError
        If some admissible pair violates the dual constraint by more than
        ``tol * (1 + max|c|)``.
    """
    c = _as_cost(cost)
    viol, pair = admissibility_violation(pot, c, m, nu)
    if viol > tol * (1.0 + np.abs(c.finite()).max(initial=0.0)):
        raise InadmissiblePotentialsError(viol, pair)
    value = solution.optimal_value if isinstance(solution, NcotSolution) else float(solution)
    return float(value - pot.value(mu))


def certificate_accepted(gap, value, rel=1e-6):
    return -1e-8 <= gap <= rel * (1.0 + abs(value))


def tight_support(pot, cost, m, nu, tol=1e-7):
    c, me, mask = _prepare(cost, m)
    mean = float(_weights(nu) @ pot.psi)
    slack = c - pot.phi[:, None] - (pot.psi[None, :] - mean) * me
    tight = mask & (np.abs(slack) <= tol)
    rows, cols = np.nonzero(tight)
    f = np.where(mask, c - (pot.psi[None, :] - mean) * me, np.inf)
    with np.errstate(invalid="ignore"):
        g = np.where(mask, (c - pot.phi[:, None]) / me, np.inf)
    f_min = f.min(axis=1)
    g_min = g.min(axis=0)
    row_min = np.abs(f[rows, cols] - f_min[rows]) <= tol
    col_min = np.abs(g[rows, cols] - g_min[cols]) <= tol * (1.0 / me[rows, cols])
    pairs = [(int(i), int(j)) for i, j in zip(rows, cols)]
    return TightSupportSet(pairs, row_min, col_min)


def certificate_report(solution, pot, mu, cost, m, nu, tol=1e-7):
    """JSON-ready summary: gap, admissibility violation, tight pairs."""
    viol, pair = admissibility_violation(pot, cost, m, nu)
    gap = float(solution.optimal_value - pot.value(mu))
    tight = tight_support(pot, cost, m, nu, tol)
    return {
        "value": solution.optimal_value,
        "dual_value": pot.value(mu),
        "gap": gap,
        "accepted": bool(certificate_accepted(gap, solution.optimal_value)),
        "max_violation": viol,
        "max_violation_pair": list(pair),
        "tight_pairs": [list(p) for p in tight.pairs],
    }


# --------------------------------------------------------------------------
# dual ascent


@dataclass
class DualAscentResult:
    potentials: DualPotentials
    converged: bool
    history: list
    escapes: int = 0

    def __iter__(self):
        # allows ``pot, converged, history = dual_ascent(...)``
        return iter((self.potentials, self.converged, self.history))


def alternating_sweep(phi, cost, m, nu):
    """One improvement sweep: mean-free shift, then the generalized c-transform.

    Returns ``(phi_new, psi, k)`` with ``phi_new >= phi + k`` entrywise.
    """
    c, me, mask = _prepare(cost, m, nu)
    k, psi, _ = normalize_psi(phi, cost, m, nu)
    phi_new, _ = _gct(c, me, mask, psi, _weights(nu))
    return phi_new, psi, k


def _escape_direction(c, me, mask, phi, psi, mw, nw, tight_tol):
    """Best ascent direction with tight constraints kept, box ``|d| <= 1``.

    Solves ``max <dphi, mu>`` s.t. ``dphi_i + m_ij dpsi_j <= 0`` on tight
    pairs and ``<dpsi, nu> = 0``. A zero optimum certifies optimality of the
    current pair (no feasible ascent direction in the dual polytope).
    """
    n, k = c.shape
    slack = c - phi[:, None] - psi[None, :] * me
    ti, tj = np.nonzero(mask & (slack <= tight_tol))
    nt = ti.size
    # variables: dphi+ (n), dphi- (n), dpsi+ (k), dpsi- (k), tight slacks, box slacks
    nd = 2 * n + 2 * k
    nv = nd + nt + nd
    rows = nt + 1 + nd
    A = np.zeros((rows, nv))
    b = np.zeros(rows)
    t = np.arange(nt)
    A[t, ti] = 1.0
    A[t, n + ti] = -1.0
    A[t, 2 * n + tj] = me[ti, tj]
    A[t, 2 * n + k + tj] = -me[ti, tj]
    A[t, nd + t] = 1.0
    A[nt, 2 * n:2 * n + k] = nw
    A[nt, 2 * n + k:nd] = -nw
    box = np.arange(nd)
    A[nt + 1 + box, box] = 1.0
    A[nt + 1 + box, nd + nt + box] = 1.0
    b[nt + 1:] = 1.0
    obj = np.zeros(nv)
    obj[:n] = -mw
    obj[n:2 * n] = mw
    sol = solve_lp(LinearProgram(obj, A, b))
    x = sol.primal
    dphi = x[:n] - x[n:2 * n]
    dpsi = x[2 * n:2 * n + k] - x[2 * n + k:nd]
    return dphi, dpsi, -sol.objective_value


def dual_ascent(cost, m, nu, mu, max_iters=500, tol=1e-10):
    """Improve an admissible pair from ``psi = 0`` by alternating transforms.

    One sweep is ``phi -> (shift, psi) -> c-transform``; each sweep can only
    raise ``<phi, mu>``. When a sweep stalls, a restricted LP over the tight
    pairs either certifies optimality (``converged = True``) or provides an
    ascent direction, which is followed up to the nearest non-tight
    constraint. Output potentials are admissible whether or not the run
    converged.

    Returns
    -------
    DualAscentResult
        Unpacks as ``(potentials, converged, history)``.
    """
    c, me, mask = _prepare(cost, m, nu)
    nw, mw = _weights(nu), _weights(mu)
    scale = 1.0 + np.abs(c[mask]).max(initial=0.0)
    tight_tol = 1e-10 * scale

    psi = np.zeros(c.shape[1])
    phi, _ = _gct(c, me, mask, psi, nw)
    k_last = 0.0
    history = [float(phi @ mw)]
    converged = False
    escapes = 0
    for _ in range(max_iters):
        phi_new, psi, k_last = alternating_sweep(phi, cost, m, nu)
        gain = float(phi_new @ mw) - history[-1]
        phi = phi_new
        if gain > tol * scale:
            history.append(float(phi @ mw))
            continue
        # stalled: ask the restricted LP for a way out
        dphi, dpsi, rate = _escape_direction(c, me, mask, phi, psi, mw, nw, tight_tol)
        if rate <= tol * scale:
            converged = True
            history.append(float(phi @ mw))
            break
        escapes += 1
        slack = c - phi[:, None] - psi[None, :] * me
        speed = dphi[:, None] + dpsi[None, :] * me
        cand = mask & (speed > 1e-14) & (slack > tight_tol)
        if not cand.any():
            raise DualityError("dual objective unbounded above; the primal problem is infeasible")
        step = float((slack[cand] / speed[cand]).min())
        psi = psi + step * dpsi
        psi -= nw @ psi
        # the stepped pair is admissible, so its c-transform dominates phi + step * dphi
        phi, _ = _gct(c, me, mask, psi, nw)
        history.append(float(phi @ mw))
    drops = np.diff(history)
    if drops.size and drops.min() < -1e-12 * scale:
        log.warning("dual objective decreased by %.3e during ascent", -drops.min())
    return DualAscentResult(DualPotentials.make(phi, psi, nu, k_last), converged, history, escapes)
