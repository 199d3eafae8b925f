"""Numba kernels against their numpy twins on the same inputs.

    python3 benchmarks/bench_kernels.py [--grid 64] [--repeat 5] [--csv out.csv]

Each kernel is called once to trigger compilation, then timed ``repeat``
times; the best time is reported together with the largest deviation
between the two paths.  Inputs are taken from a solved rough instance so
the sizes match the pipeline.
"""
import argparse
import csv
import sys
import time

import numpy as np

from ma_lab import kernels as K
from ma_lab.lab.pipeline import rough_problem
from ma_lab.lab.samples import unit_regions
from ma_lab.sections.atlas import nodes_in
from ma_lab.solver.solve import solve


def best_time(fn, args, repeat):
    fn(*args)
    out = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        res = fn(*args)
        out.append(time.perf_counter() - t0)
    return min(out), res


def _max_dev(a, b):
    if isinstance(a, tuple):
        return max(_max_dev(x, y) for x, y in zip(a, b))
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b))) if a.size else 0.0


def cases(grid, seed=0):
    sol = solve(rough_problem(seed), grid)
    u = sol.u
    inner, outer = unit_regions(u.domain)
    rng = np.random.default_rng(seed)

    pts = rng.normal(size=(20000, 2))
    yield "hull2d", (K.hull2d_numba, K.hull2d_numpy), (pts[np.lexsort((pts[:, 1], pts[:, 0]))], 1e-12)

    q = rng.uniform(-0.7, 0.7, size=(20000, 2))
    P = np.ascontiguousarray(u.hull.slopes)
    o = np.ascontiguousarray(u.hull.offsets)
    yield "pl_max", (K.pl_max_numba, K.pl_max_numpy), (q, P, o)

    ptr, idx = u.neighbours
    I = u.interior
    centers = np.ascontiguousarray(I, dtype=np.int64)
    nptr = np.concatenate([[0], np.cumsum(ptr[I + 1] - ptr[I])]).astype(np.int64)
    nidx = np.concatenate([idx[ptr[i]:ptr[i + 1]] for i in I]).astype(np.int64)
    box = 4.0 * float(np.abs(u.gradients).max() + 1.0)
    yield "clip_cells", (K.clip_cells_numba, K.clip_cells_numpy), \
        (u.nodes, u.values, centers, nptr, nidx, box)

    c = nodes_in(u, inner).astype(np.int64)
    cand = nodes_in(u, outer).astype(np.int64)
    field = np.nan_to_num(u.hess_norm)
    heights = 0.05 * 0.5 ** np.arange(8)
    yield "rung_sums", (K.rung_sums_numba, K.rung_sums_numpy), \
        (u.nodes, u.values, u.gradients, field, c, cand, heights)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--grid", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--csv", help="write rows to this file")
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        print("numba is not installed: only the numpy path exists")
        return 1
    rows = []
    print(f"{'kernel':<12}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max dev':>12}")
    for name, (fa, fb), a in cases(args.grid):
        ta, ra = best_time(fa, a, args.repeat)
        tb, rb = best_time(fb, a, args.repeat)
        dev = _max_dev(ra, rb)
        rows.append((name, ta, tb, tb / ta, dev))
        print(f"{name:<12}{ta:>12.4g}{tb:>12.4g}{tb / ta:>10.1f}{dev:>12.2e}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(("kernel", "numba_s", "numpy_s", "speedup", "max_dev"))
            w.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
