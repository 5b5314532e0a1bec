#!/usr/bin/env python3
"""Compare the compiled kernel core against the pure-Python fallback.

Loads both implementations side by side (ignoring the import-time
selection) and times each hot kernel with the usual min / lower-median /
max protocol.  Results go to stdout and optionally a CSV.

    python benchmarks/backend_bench.py --repeats 7 --csv backends.csv
"""

import argparse
import csv
import sys
import time

import numpy as np

import octask.kernels._pykernels as pyk

try:
    import octask.kernels._ckernels as ck
except ImportError:
    ck = None

from octask.amr import gravity
from octask.amr.tree import N, TreeStructure, children_of


def _timed(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    times.sort()
    return times[0], times[(repeats - 1) // 2], times[-1]


def _workloads(seed=11):
    rng = np.random.default_rng(seed)

    lvl1 = children_of((0, 0, 0, 0))
    leaves = list(lvl1[4:])
    for k in lvl1[:4]:
        leaves.extend(children_of(k))
    st = TreeStructure(2.0, leaves)
    rho = {k: rng.uniform(0.1, 1.0, (N, N, N)) for k in st.leaves}
    flat = gravity.build_flat_tree(st, rho.__getitem__)
    off = flat.leaf_offset[st.leaves[0]]
    tgt = (flat.cx[off:off + 512], flat.cy[off:off + 512], flat.cz[off:off + 512])

    shape = (N + 2, N + 2, N + 2)
    ext = (rng.uniform(0.5, 2.0, shape), rng.uniform(-0.3, 0.3, shape),
           rng.uniform(-0.3, 0.3, shape), rng.uniform(-0.3, 0.3, shape),
           rng.uniform(2.0, 4.0, shape), rng.uniform(-1.0, 0.0, shape))
    outs = [np.empty((N, N, N)) for _ in range(5)]

    dsub = slice(0, 4096)

    def series(mod):
        return lambda: mod.maclaurin_partial(0.999999, 1, 2_000_001)

    def walk(mod):
        out = np.empty(512)
        return lambda: mod.gravity_walk(
            flat.size, flat.comx, flat.comy, flat.comz, flat.mass,
            flat.first_child, flat.cell_off, flat.cell_cnt,
            flat.cx, flat.cy, flat.cz, flat.cmass, off, *tgt, 0.5, out)

    def direct(mod):
        out = np.empty(4096)
        return lambda: mod.direct_potential(
            flat.cx[dsub], flat.cy[dsub], flat.cz[dsub],
            flat.cx[dsub], flat.cy[dsub], flat.cz[dsub], flat.cmass[dsub], out)

    def hydro(mod):
        def run():
            for _ in range(50):
                mod.hydro_update(*ext, 5 / 3, 1e-4, 0.25, *outs)
        return run

    def signal(mod):
        def run():
            for _ in range(200):
                mod.max_signal(*ext[:5], 5 / 3)
        return run

    return [
        ("series_partial_2e6_terms", series),
        ("gravity_walk_leaf_theta05", walk),
        ("direct_potential_4096", direct),
        ("hydro_update_x50", hydro),
        ("max_signal_x200", signal),
    ]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--csv", default=None)
    args = parser.parse_args(argv)

    if ck is None:
        print("compiled kernel core is not built; nothing to compare",
              file=sys.stderr)
        return 1

    rows = []
    print(f"{'kernel':<28} {'compiled (median)':>18} {'python (median)':>16} {'speedup':>8}")
    for name, make in _workloads():
        c = _timed(make(ck), args.repeats)
        p = _timed(make(pyk), args.repeats)
        speedup = p[1] / c[1] if c[1] > 0 else float("inf")
        print(f"{name:<28} {c[1]:>16.6f}s {p[1]:>14.6f}s {speedup:>7.1f}x")
        rows.append((name, "compiled", *c))
        rows.append((name, "python", *p))

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["kernel", "backend", "time_min_s", "time_median_s", "time_max_s"])
            for row in rows:
                w.writerow([row[0], row[1]] + [f"{t:.6f}" for t in row[2:]])
        print(f"csv={args.csv}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
