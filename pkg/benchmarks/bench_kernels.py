"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 40]

The end-to-end row runs a full NCOT solve in a subprocess per backend, since
the backend is fixed at import time by ``NCOT_BACKEND``.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from ncot import _backend
from ncot.kernels import FLAVOURS

SOLVE_SNIPPET = """
import time, numpy as np
from ncot import solve_ncot, BACKEND
rng = np.random.default_rng(0)
n = {n}
mu = rng.random(n) + .1; mu /= mu.sum(); nu = rng.random(n) + .1; nu /= nu.sum()
x, y = rng.random((n, 2)), rng.random((n, 2))
d = ((x[:, None] - y[None]) ** 2).sum(-1)
solve_ncot(mu, nu, d, np.exp(-d))
t = time.perf_counter(); solve_ncot(mu, nu, d, np.exp(-d)); print(BACKEND, time.perf_counter() - t)
"""


def _cases(size, rng):
    tab = rng.random((size + 1, 3 * size + 1))
    cost = rng.random((size, size))
    mass = 0.5 + rng.random((size, size))
    mask = np.ones((size, size), dtype=bool)
    vec = rng.random(size)
    ne = size * 4
    src = rng.integers(0, size, ne).astype(np.int64)
    dst = (src + 1 + rng.integers(0, size - 1, ne)) % size
    w = rng.random(ne)
    return {
        "pivot": lambda f: f(tab.copy(), 0, 0),
        "c_transform": lambda f: f(cost, mass, mask, vec),
        "psi_transform": lambda f: f(cost, mass, mask, vec),
        "bellman_ford": lambda f: f(size, src, dst.astype(np.int64), w, -1, 1e-12),
    }


def main(argv=None):
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=40)
    ap.add_argument("--solve-size", type=int, default=12)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"numba available: {_backend.HAVE_NUMBA}")
    print(f"{'kernel':<16}{'numba [us]':>12}{'numpy [us]':>12}{'speed-up':>10}")
    for name, call in _cases(args.size, rng).items():
        row = []
        for flavour in ("numba", "numpy"):
            fn = FLAVOURS[flavour][name]
            call(fn)  # compile / warm up
            t = min(timeit.repeat(lambda: call(fn), number=20, repeat=args.repeat)) / 20
            row.append(t * 1e6)
        print(f"{name:<16}{row[0]:>12.1f}{row[1]:>12.1f}{row[1] / row[0]:>10.2f}")
    for backend in ("numba", "numpy"):
        env = dict(os.environ, NCOT_BACKEND=backend)
        out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(n=args.solve_size)],
                             env=env, capture_output=True, text=True, check=True)
        name, secs = out.stdout.split()
        print(f"solve_ncot {args.solve_size}x{args.solve_size} [{name}]: {float(secs) * 1e3:.1f} ms")


if __name__ == "__main__":
    main()
