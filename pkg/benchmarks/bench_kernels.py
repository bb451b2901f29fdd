"""Compare the numba and numpy quadrature kernels.

Two measurements:

* the raw contractions on assembly-shaped arrays, both backends called
  directly in this process;
* a full ``assemble_direct`` in a fresh interpreter per backend, selected
  through ``FLUXDG_DISABLE_NUMBA``.

Usage: python benchmarks/bench_kernels.py [--n 32] [--p 3] [--repeat 5]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from fluxdg import _kernels

ASSEMBLE = """
import timeit
from fluxdg import PenaltyParams, assemble_direct, build_rect_mesh, build_space, make_coefficient
from fluxdg import _kernels
space = build_space(build_rect_mesh((0, 1, 0, 1), {n}, {n}), {p})
K = make_coefficient({{"kind": "checkerboard", "values": [1.0, 10.0]}}, space)
run = lambda: assemble_direct(space, K, PenaltyParams())
run()  # warm-up, includes JIT compilation on the numba path
print(_kernels.BACKEND, min(timeit.repeat(run, number=1, repeat={repeat})))
"""


def bench_contractions(n, p, repeat):
    ne, nq, nb = n * n, (p + 2) ** 2, (p + 1) ** 2
    rng = np.random.default_rng(0)
    w = rng.random((ne, nq))
    x = rng.standard_normal((ne, nq, nb))
    g = rng.standard_normal((ne, nq))
    rows = []
    cases = [("weighted_outer", "numpy", lambda: _kernels.weighted_outer_numpy(w, x, x)),
             ("weighted_moments", "numpy", lambda: _kernels.weighted_moments_numpy(w, g, x))]
    if _kernels.NUMBA_AVAILABLE:
        _kernels.weighted_outer_numba(w, x, x)
        _kernels.weighted_moments_numba(w, g, x)
        cases += [("weighted_outer", "numba", lambda: _kernels.weighted_outer_numba(w, x, x)),
                  ("weighted_moments", "numba", lambda: _kernels.weighted_moments_numba(w, g, x))]
        diff = np.max(np.abs(_kernels.weighted_outer_numba(w, x, x) - _kernels.weighted_outer_numpy(w, x, x)))
        print(f"max |numba - numpy| on weighted_outer: {diff:.2e}")
    for name, backend, fn in cases:
        best = min(timeit.repeat(fn, number=1, repeat=repeat))
        rows.append((name, backend, best))
    return rows


def bench_assembly(n, p, repeat):
    out = []
    for flag in ("1", "0"):
        env = dict(os.environ, FLUXDG_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", ASSEMBLE.format(n=n, p=p, repeat=repeat)],
                             capture_output=True, text=True, env=env, check=True)
        backend, best = res.stdout.split()
        out.append((backend, float(best)))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=32, help="elements per direction")
    ap.add_argument("--p", type=int, default=3, help="polynomial degree")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    print(f"contractions, {args.n}x{args.n} elements, p={args.p}")
    for name, backend, t in bench_contractions(args.n, args.p, args.repeat):
        print(f"  {name:17s} {backend:6s} {t * 1e3:9.3f} ms")
    print("assemble_direct (fresh process per backend)")
    for backend, t in bench_assembly(args.n, args.p, args.repeat):
        print(f"  {backend:6s} {t * 1e3:9.3f} ms")


if __name__ == "__main__":
    main()
