"""Independent reference solvers used only by the tests."""
from collections import deque

import numpy as np
from scipy.optimize import linprog


def highs(c, A, b):
    """``min c x, A x = b, x >= 0`` by HiGHS; returns ``(value, x)`` or ``None``."""
    res = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    return (res.fun, res.x) if res.status == 0 else None


def _full_rank_rows(A, tol=1e-10):
    keep = []
    for i in range(A.shape[0]):
        if np.linalg.matrix_rank(A[keep + [i]], tol) == len(keep) + 1:
            keep.append(i)
    return keep


def _start_basis(A, x, tol):
    """Support of a vertex completed to a basis with further columns."""
    basis = [int(j) for j in np.flatnonzero(x > tol)]
    for j in range(A.shape[1]):
        if len(basis) == A.shape[0]:
            break
        if j not in basis and np.linalg.matrix_rank(A[:, basis + [j]], 1e-10) == len(basis) + 1:
            basis.append(j)
    return tuple(sorted(basis))


def enumerate_vertices(A, b, tol=1e-10, limit=200_000):
    """All vertices of ``{x >= 0 : A x = b}`` by breadth-first search over feasible bases.

    Adjacent feasible bases differ by one simplex pivot; the graph of feasible
    bases of a nonempty polyhedron is connected, so the search from any
    starting vertex reaches every vertex. Returns a list of vertices (possibly
    empty when infeasible).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    rows = _full_rank_rows(A)
    A, b = A[rows], b[rows]
    m, n = A.shape
    start = highs(np.zeros(n), A, b)
    if start is None:
        return []
    # move to a vertex: HiGHS simplex returns basic solutions for a zero objective
    basis0 = _start_basis(A, start[1], 1e-9)
    seen = {basis0}
    queue = deque([basis0])
    verts = {}
    while queue:
        basis = queue.popleft()
        B = A[:, basis]
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            continue
        xb = Binv @ b
        if (xb < -1e-9).any():
            continue
        x = np.zeros(n)
        x[list(basis)] = np.maximum(xb, 0.0)
        verts.setdefault(tuple(np.round(x, 9)), x)
        D = Binv @ A
        bset = set(basis)
        for j in range(n):
            if j in bset:
                continue
            d = D[:, j]
            pos = d > tol
            if not pos.any():
                continue
            ratios = np.where(pos, np.maximum(xb, 0.0) / np.where(pos, d, 1.0), np.inf)
            theta = ratios.min()
            for r in np.flatnonzero(ratios <= theta + 1e-12):
                nb = list(basis)
                nb[r] = j
                nb = tuple(sorted(nb))
                if nb not in seen:
                    seen.add(nb)
                    if len(seen) > limit:
                        raise RuntimeError("vertex enumeration exceeded its basis budget")
                    queue.append(nb)
    return list(verts.values())


def vertex_minimum(c, A, b):
    verts = enumerate_vertices(A, b)
    if not verts:
        return None
    return min(float(np.asarray(c) @ v) for v in verts), len(verts)


def classical_transport(mu, nu, cost):
    """Balanced Kantorovich LP by HiGHS."""
    ns, nt = cost.shape
    A = np.zeros((ns + nt, ns * nt))
    for i in range(ns):
        A[i, i * nt:(i + 1) * nt] = 1.0
    for j in range(nt):
        A[ns + j, j::nt] = 1.0
    return highs(cost.ravel(), A, np.concatenate([mu, nu]))[0]
