"""Lagrangian checks of the dynamic formulation.

Particles start at the source points with weights ``mu_x`` and move along
straight lines ``X(t, x) = x + t (T(x) - x)``. Mass is carried with the
factor ``m(x, X(t, x))``, so the total mass ``M(t)`` changes along the flow
while each particle remembers its origin (no inversion of ``X`` needed).
"""
import csv
from dataclasses import dataclass

import numpy as np

from .transport import _weights

DEFAULT_STEPS = 64


class EndpointError(ValueError):
    """A flow does not end at an admissible endpoint."""


def uniform_time_grid(steps=DEFAULT_STEPS):
    return np.linspace(0.0, 1.0, steps + 1)


def _check_time_grid(tg):
    tg = np.asarray(tg, dtype=float).reshape(-1)
    if tg.size < 2 or tg[0] != 0.0 or tg[-1] != 1.0 or np.any(np.diff(tg) <= 0):
        raise ValueError("time grid must increase strictly from 0 to 1")
    return tg


def _as_coords(a):
    a = np.asarray(a, dtype=float)
    return a.reshape(-1, 1) if a.ndim == 1 else a


# --------------------------------------------------------------------------
# mass-change factors as functions of (origin, position)


def quadratic_leaky_mass(k):
    """``m(x, y) = 1 - k |x-y|^2 / 2`` with its gradient in ``y``."""

    def value(x, y):
        return 1.0 - 0.5 * k * ((y - x) ** 2).sum(axis=-1)

    def grad(x, y):
        return -k * (y - x)

    return value, grad


def exponential_mass(k):
    """``m(x, y) = exp(-k |x-y|^2 / 2)`` with its gradient in ``y``."""

    def value(x, y):
        return np.exp(-0.5 * k * ((y - x) ** 2).sum(axis=-1))

    def grad(x, y):
        return -k * (y - x) * value(x, y)[:, None]

    return value, grad


def _unit_mass(x, y):
    return np.ones(x.shape[0])


# --------------------------------------------------------------------------
# flows


@dataclass(frozen=True)
class FlowField:
    """Straight-line flow from ``sources`` to ``targets`` (row ``i`` to row ``i``)."""

    sources: np.ndarray
    targets: np.ndarray
    exponent: float = 2.0
    time_grid: np.ndarray = None

    def __post_init__(self):
        s, t = _as_coords(self.sources), _as_coords(self.targets)
        if s.shape != t.shape:
            raise ValueError(f"sources {s.shape} and targets {t.shape} differ in shape")
        if self.exponent < 1:
            raise ValueError("cost exponent must be at least 1")
        tg = uniform_time_grid() if self.time_grid is None else self.time_grid
        object.__setattr__(self, "sources", s)
        object.__setattr__(self, "targets", t)
        object.__setattr__(self, "time_grid", _check_time_grid(tg))

    @classmethod
    def from_map(cls, tmap, source_points, target_points, exponent=2.0, time_grid=None):
        src = _as_coords(source_points)
        tgt = _as_coords(target_points)
        a = np.asarray(tmap.assignment)
        # points off supp mu stay put
        dest = np.where((a >= 0)[:, None], tgt[np.maximum(a, 0)], src)
        return cls(src, dest, exponent, time_grid)

    def positions(self, t):
        return self.sources + t * (self.targets - self.sources)

    def velocity(self, t=None):
        """Time-constant particle velocities ``T(x) - x``."""
        return self.targets - self.sources

    def with_time_grid(self, time_grid):
        return FlowField(self.sources, self.targets, self.exponent, time_grid)


@dataclass(frozen=True)
class PiecewiseLinearFlow:
    """Particle paths through ``waypoints[r]`` at ``knots[r]`` (first knot 0, last 1)."""

    knots: np.ndarray
    waypoints: tuple
    exponent: float = 2.0

    def __post_init__(self):
        knots = _check_time_grid(self.knots)
        pts = tuple(_as_coords(w) for w in self.waypoints)
        if len(pts) != knots.size:
            raise ValueError("need one waypoint array per knot")
        if len({p.shape for p in pts}) != 1:
            raise ValueError("waypoint arrays must share a shape")
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "waypoints", pts)

    @classmethod
    def detour(cls, flow, offset):
        """Two segments through the displaced midpoint ``(x + T(x))/2 + offset``."""
        mid = 0.5 * (flow.sources + flow.targets) + np.asarray(offset, dtype=float)
        return cls(np.array([0.0, 0.5, 1.0]), (flow.sources, mid, flow.targets), flow.exponent)

    @classmethod
    def from_flow(cls, flow):
        return cls(np.array([0.0, 1.0]), (flow.sources, flow.targets), flow.exponent)

    @property
    def sources(self):
        return self.waypoints[0]

    @property
    def endpoints(self):
        return self.waypoints[-1]

    def cost(self, mu):
        """``sum_x mu_x int_0^1 |v|^a dt``, exact for piecewise-constant velocities."""
        mw = _weights(mu)
        total = np.zeros(mw.size)
        for r in range(len(self.waypoints) - 1):
            dt = self.knots[r + 1] - self.knots[r]
            v = (self.waypoints[r + 1] - self.waypoints[r]) / dt
            total += dt * np.sqrt((v ** 2).sum(axis=1)) ** self.exponent
        return float(mw @ total)


@dataclass(frozen=True)
class DensitySnapshot:
    t: float
    positions: np.ndarray
    weights: np.ndarray
    total_mass: float


def straight_line_flow(flow, mu, mass_fn=None):
    """Snapshots of ``X(t, .)`` with particle weights ``mu_x m(x, X(t, x))``.

    ``mass_fn(x, y)`` evaluates ``m`` row-wise on coordinate arrays; ``None``
    means conservative transport.
    """
    mw = _weights(mu)
    value = _unit_mass if mass_fn is None else (mass_fn[0] if isinstance(mass_fn, tuple) else mass_fn)
    out = []
    for t in flow.time_grid:
        pos = flow.positions(t)
        w = mw * value(flow.sources, pos)
        out.append(DensitySnapshot(float(t), pos, w, float(w.sum())))
    return out


def kinetic_cost(flow, mu):
    """``sum_x mu_x |T(x) - x|^a``.

    Straight-line velocities are constant in time, so the time integral of
    ``|v|^a`` equals its value at any instant; no quadrature is involved.
    """
    mw = _weights(mu)
    speed = np.sqrt((flow.velocity() ** 2).sum(axis=1))
    return float(mw @ speed ** flow.exponent)


def snapshot_pushforward(snapshot, target_points, tol=1e-12):
    """Normalised snapshot weights accumulated on ``target_points``.

    Raises
    ------
    EndpointError
        If some particle with positive weight is not at a target point.
    """
    tgt = _as_coords(target_points)
    dist = np.sqrt(((snapshot.positions[:, None, :] - tgt[None, :, :]) ** 2).sum(axis=-1))
    idx = np.argmin(dist, axis=1)
    off = (dist[np.arange(idx.size), idx] > tol) & (snapshot.weights > 0)
    if off.any():
        raise EndpointError(f"particles {np.flatnonzero(off).tolist()} end away from the target support")
    pushed = np.bincount(idx, weights=snapshot.weights, minlength=tgt.shape[0])
    return pushed / pushed.sum()


@dataclass(frozen=True)
class JensenReport:
    flow_cost: float
    static_value: float
    holds: bool
    strict: bool

    def __bool__(self):
        return self.holds


def jensen_lower_bound_check(flow, mu, static_value, nu=None, target_points=None,
                             mass_fn=None, endpoint_tol=1e-9, slack=1e-9):
    """Check ``cost(flow) >= static_value - slack`` for a flow with an admissible endpoint.

    ``flow`` is a :class:`PiecewiseLinearFlow` or :class:`FlowField`. When
    ``nu`` and ``target_points`` are given, the m-weighted endpoint
    distribution must reproduce ``nu`` within ``endpoint_tol``.
    """
    if isinstance(flow, FlowField):
        flow = PiecewiseLinearFlow.from_flow(flow)
    if nu is not None and target_points is not None:
        value = _unit_mass if mass_fn is None else (mass_fn[0] if isinstance(mass_fn, tuple) else mass_fn)
        w = _weights(mu) * value(flow.sources, flow.endpoints)
        snap = DensitySnapshot(1.0, flow.endpoints, w, float(w.sum()))
        dev = np.abs(snapshot_pushforward(snap, target_points) - _weights(nu)).max()
        if dev > endpoint_tol:
            raise EndpointError(f"endpoint distribution deviates from nu by {dev:.3e}")
    cost = flow.cost(mu)
    return JensenReport(cost, float(static_value), cost >= static_value - slack, cost > static_value + slack)


@dataclass(frozen=True)
class MassBalanceReport:
    times: np.ndarray
    dmdt: np.ndarray
    source: np.ndarray
    residuals: np.ndarray

    @property
    def max_residual(self):
        return float(np.abs(self.residuals).max(initial=0.0))


def _fd_position_gradient(value, x, y, step=1e-5):
    g = np.empty_like(y)
    for d in range(y.shape[1]):
        e = np.zeros(y.shape[1])
        e[d] = step
        g[:, d] = (value(x, y + e) - value(x, y - e)) / (2 * step)
    return g


def mass_balance_check(flow, mu, mass_fn, time_grid=None):
    """Compare the central difference of ``M(t)`` with the source term.

    The source at time ``t`` is ``sum_x mu_x grad_y m(x, X(t,x)) . v(x)``,
    i.e. the integral of ``rho grad log m . v``. ``mass_fn`` is either a
    callable ``m(x, y)`` (gradient by central differences in space) or a
    ``(value, grad)`` pair. Residuals are reported at interior time nodes and
    shrink at second order in the time step.
    """
    tg = flow.time_grid if time_grid is None else _check_time_grid(time_grid)
    if isinstance(mass_fn, tuple):
        value, grad = mass_fn
    else:
        value = mass_fn

        def grad(x, y):
            return _fd_position_gradient(value, x, y)

    mw = _weights(mu)
    x = flow.sources
    v = flow.velocity()
    M = np.array([mw @ value(x, flow.positions(t)) for t in tg])
    inner = tg[1:-1]
    dmdt = (M[2:] - M[:-2]) / (tg[2:] - tg[:-2])
    src = np.array([mw @ (grad(x, flow.positions(t)) * v).sum(axis=1) for t in inner])
    return MassBalanceReport(inner, dmdt, src, dmdt - src)


# --------------------------------------------------------------------------
# output


def write_snapshots_csv(snapshots, path):
    dim = snapshots[0].positions.shape[1] if snapshots else 1
    pos_cols = ["position"] if dim == 1 else [f"position_{d}" for d in range(dim)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "particle"] + pos_cols + ["weight"])
        for snap in snapshots:
            for pid, (pos, wt) in enumerate(zip(snap.positions, snap.weights)):
                w.writerow([repr(snap.t), pid] + [repr(float(p)) for p in pos] + [repr(float(wt))])


def dynamics_summary(flow, mu, static_value, mass_fn=None, detour_offset=None):
    """Costs, Jensen check and mass-balance residual as a JSON-ready dict."""
    kin = kinetic_cost(flow, mu)
    out = {
        "kinetic_cost": kin,
        "static_value": float(static_value),
        "difference": kin - float(static_value),
        "steps": int(flow.time_grid.size - 1),
    }
    if detour_offset is not None:
        det = PiecewiseLinearFlow.detour(flow, detour_offset)
        rep = jensen_lower_bound_check(det, mu, static_value)
        out["detour_cost"] = rep.flow_cost
        out["detour_strictly_larger"] = bool(rep.strict)
    if mass_fn is not None:
        mb = mass_balance_check(flow, mu, mass_fn)
        out["mass_balance_max_residual"] = mb.max_residual
        snaps = straight_line_flow(flow, mu, mass_fn)
        out["total_mass"] = [s.total_mass for s in snaps]
    return out
