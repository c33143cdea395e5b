"""Hot numeric kernels, each in a numba flavour and a numpy flavour.

The public names at the bottom of the module are bound to one flavour at
import time according to :mod:`ncot._backend`. Both flavours stay importable
under their suffixed names so tests and benchmarks can compare them.
"""
import numpy as np

from ._backend import USE_NUMBA, njit

# --------------------------------------------------------------------------
# simplex tableau


@njit
def _pivot_nb(tab, row, col):
    m, n = tab.shape
    piv = tab[row, col]
    for j in range(n):
        tab[row, j] /= piv
    for i in range(m):
        if i == row:
            continue
        f = tab[i, col]
        if f != 0.0:
            for j in range(n):
                tab[i, j] -= f * tab[row, j]
        tab[i, col] = 0.0
    tab[row, col] = 1.0


def _pivot_np(tab, row, col):
    tab[row] /= tab[row, col]
    f = tab[:, col].copy()
    f[row] = 0.0
    tab -= np.outer(f, tab[row])
    tab[:, col] = 0.0
    tab[row, col] = 1.0


@njit
def _bland_entering_nb(cost_row, allowed, tol):
    for j in range(cost_row.shape[0]):
        if allowed[j] and cost_row[j] < -tol:
            return j
    return -1


def _bland_entering_np(cost_row, allowed, tol):
    idx = np.flatnonzero(allowed & (cost_row < -tol))
    return int(idx[0]) if idx.size else -1


@njit
def _bland_leaving_nb(column, rhs, basis, piv_tol):
    best = -1
    best_ratio = np.inf
    for i in range(column.shape[0]):
        a = column[i]
        if a > piv_tol:
            r = rhs[i] / a
            if best < 0:
                best, best_ratio = i, r
            else:
                gap = 1e-12 * (1.0 + abs(best_ratio))
                if r < best_ratio - gap:
                    best, best_ratio = i, r
                elif r <= best_ratio + gap and basis[i] < basis[best]:
                    best, best_ratio = i, min(r, best_ratio)
    return best


def _bland_leaving_np(column, rhs, basis, piv_tol):
    # Sequential scan semantics of the compiled twin, kept verbatim so the
    # two backends choose identical pivots.
    rows = np.flatnonzero(column > piv_tol)
    if rows.size == 0:
        return -1
    ratios = rhs[rows] / column[rows]
    best = int(rows[0])
    best_ratio = float(ratios[0])
    for i, r in zip(rows[1:], ratios[1:]):
        gap = 1e-12 * (1.0 + abs(best_ratio))
        if r < best_ratio - gap:
            best, best_ratio = int(i), float(r)
        elif r <= best_ratio + gap and basis[i] < basis[best]:
            best, best_ratio = int(i), min(float(r), best_ratio)
    return best


# --------------------------------------------------------------------------
# generalized c-transforms (masked, lowest-index tie-break)


@njit
def _c_transform_nb(cost, mass, mask, psi_shifted):
    n, k = cost.shape
    out = np.empty(n)
    arg = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        best = np.inf
        for j in range(k):
            if mask[i, j]:
                v = cost[i, j] - psi_shifted[j] * mass[i, j]
                if v < best:
                    best = v
                    arg[i] = j
        out[i] = best
    return out, arg


def _c_transform_np(cost, mass, mask, psi_shifted):
    vals = np.where(mask, cost - psi_shifted[None, :] * mass, np.inf)
    arg = np.argmin(vals, axis=1)
    out = vals[np.arange(vals.shape[0]), arg]
    arg = np.where(np.isfinite(out), arg, -1)
    return out, arg.astype(np.int64)


@njit
def _psi_transform_nb(cost, mass, mask, phi):
    n, k = cost.shape
    out = np.empty(k)
    arg = np.full(k, -1, dtype=np.int64)
    for j in range(k):
        best = np.inf
        for i in range(n):
            if mask[i, j]:
                v = (cost[i, j] - phi[i]) / mass[i, j]
                if v < best:
                    best = v
                    arg[j] = i
        out[j] = best
    return out, arg


def _psi_transform_np(cost, mass, mask, phi):
    with np.errstate(divide="ignore", invalid="ignore"):
        vals = np.where(mask, (cost - phi[:, None]) / np.where(mask, mass, 1.0), np.inf)
    arg = np.argmin(vals, axis=0)
    out = vals[arg, np.arange(vals.shape[1])]
    arg = np.where(np.isfinite(out), arg, -1)
    return out, arg.astype(np.int64)


# --------------------------------------------------------------------------
# Bellman-Ford, Jacobi sweeps so both flavours relax in the same order


@njit
def _bellman_ford_nb(n, src, dst, weight, source, tol):
    dist = np.full(n, np.inf)
    if source < 0:
        dist[:] = 0.0
    else:
        dist[source] = 0.0
    pred = np.full(n, -1, dtype=np.int64)
    last = -1
    for sweep in range(n):
        new = dist.copy()
        changed = -1
        for e in range(src.shape[0]):
            du = dist[src[e]]
            if du == np.inf:
                continue
            cand = du + weight[e]
            if cand < new[dst[e]] - tol:
                new[dst[e]] = cand
                pred[dst[e]] = e
                changed = dst[e]
        dist = new
        if changed < 0:
            return dist, pred, -1
        last = changed
    return dist, pred, last


def _bellman_ford_np(n, src, dst, weight, source, tol):
    dist = np.full(n, np.inf)
    if source < 0:
        dist[:] = 0.0
    else:
        dist[source] = 0.0
    pred = np.full(n, -1, dtype=np.int64)
    order = np.arange(src.shape[0])
    last = -1
    for _ in range(n):
        cand = dist[src] + weight
        live = np.isfinite(cand)
        best = np.full(n, np.inf)
        np.minimum.at(best, dst[live], cand[live])
        improve = best < dist - tol
        if not improve.any():
            return dist, pred, -1
        # first edge (lowest index) attaining the per-vertex minimum
        hit = live & improve[dst] & (cand == best[dst])
        e_hit = order[hit]
        v_hit = dst[hit]
        first = np.full(n, -1, dtype=np.int64)
        for e, v in zip(e_hit[::-1], v_hit[::-1]):
            first[v] = e
        upd = np.flatnonzero(improve)
        dist = dist.copy()
        dist[upd] = best[upd]
        pred[upd] = first[upd]
        last = int(upd[-1])
    return dist, pred, last


if USE_NUMBA:
    pivot = _pivot_nb
    bland_entering = _bland_entering_nb
    bland_leaving = _bland_leaving_nb
    c_transform_kernel = _c_transform_nb
    psi_transform_kernel = _psi_transform_nb
    bellman_ford_kernel = _bellman_ford_nb
else:
    pivot = _pivot_np
    bland_entering = _bland_entering_np
    bland_leaving = _bland_leaving_np
    c_transform_kernel = _c_transform_np
    psi_transform_kernel = _psi_transform_np
    bellman_ford_kernel = _bellman_ford_np

FLAVOURS = {
    "numba": dict(
        pivot=_pivot_nb,
        bland_entering=_bland_entering_nb,
        bland_leaving=_bland_leaving_nb,
        c_transform=_c_transform_nb,
        psi_transform=_psi_transform_nb,
        bellman_ford=_bellman_ford_nb,
    ),
    "numpy": dict(
        pivot=_pivot_np,
        bland_entering=_bland_entering_np,
        bland_leaving=_bland_leaving_np,
        c_transform=_c_transform_np,
        psi_transform=_psi_transform_np,
        bellman_ford=_bellman_ford_np,
    ),
}
