#!/usr/bin/env python3
"""A* kernel benchmark: numba-compiled vs pure-Python backend.

Runs identical random anchor pairs through both backends on generated terrains
of growing size, checks the paths agree, and prints median query times and the
speedup.  ``--end-to-end`` also times the full distance table of one default
instance in two subprocesses, one with UAVROUTE_DISABLE_NUMBA=1.

    python3 benchmarks/bench_astar.py --sizes 50 100 200 --pairs 20
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from uavroute import _astar_kernels as kernels
from uavroute._accel import NUMBA_AVAILABLE
from uavroute.terrain import GeneratorSpec, generate_instance, reachable_region

E2E_SNIPPET = """
import time
from uavroute._accel import backend
from uavroute.geodesic import pairwise_matrix
from uavroute.terrain import GeneratorSpec, generate_instance
inst = generate_instance(GeneratorSpec(), {seed})
pairwise_matrix(inst.terrain, inst.anchors[:2])  # compile / warm up
t0 = time.perf_counter()
pairwise_matrix(inst.terrain, inst.anchors)
print(backend(), time.perf_counter() - t0)
"""


def time_queries(z, blocked, cs, pairs, backend):
    times, paths = [], []
    for (sx, sy), (tx, ty) in pairs:
        t0 = time.perf_counter()
        status, path, _ = kernels.astar(z, blocked, cs, sx, sy, tx, ty, 0, backend)
        times.append(time.perf_counter() - t0)
        paths.append((status, path.tolist()))
    return np.median(times), paths


def bench_size(size, n_pairs, seed):
    spec = GeneratorSpec(width=size, height=size, K=2, N=4)
    inst = generate_instance(spec, seed)
    t = inst.terrain
    z = t.elevations + t.safety_altitude
    cells = np.argwhere(reachable_region(t, inst.starts[0]))
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(n_pairs):
        a, b = rng.choice(len(cells), 2, replace=False)
        pairs.append(((int(cells[a][1]), int(cells[a][0])), (int(cells[b][1]), int(cells[b][0]))))
    kernels.astar(z, t.obstacle_mask, t.cell_size, *pairs[0][0], *pairs[0][1], 0, "numba")
    fast, fast_paths = time_queries(z, t.obstacle_mask, t.cell_size, pairs, "numba")
    slow, slow_paths = time_queries(z, t.obstacle_mask, t.cell_size, pairs, "python")
    return fast, slow, fast_paths == slow_paths


def end_to_end(seed):
    out = {}
    for disable in ("0", "1"):
        env = dict(os.environ, UAVROUTE_DISABLE_NUMBA=disable)
        res = subprocess.run([sys.executable, "-c", E2E_SNIPPET.format(seed=seed)], env=env,
                             capture_output=True, text=True, check=True)
        name, secs = res.stdout.split()
        out[name] = float(secs)
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--pairs", type=int, default=20, help="queries per size")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--end-to-end", action="store_true",
                    help="also time a full distance table per backend in subprocesses")
    args = ap.parse_args()
    if not NUMBA_AVAILABLE:
        sys.exit("numba backend unavailable (not installed or UAVROUTE_DISABLE_NUMBA set)")

    print(f"{'grid':>8} {'numba ms':>10} {'python ms':>10} {'speedup':>8}  paths equal")
    for size in args.sizes:
        fast, slow, same = bench_size(size, args.pairs, args.seed)
        print(f"{size:>4}x{size:<3} {fast * 1e3:>10.3f} {slow * 1e3:>10.3f} "
              f"{slow / fast:>7.1f}x  {same}")
    if args.end_to_end:
        t = end_to_end(args.seed)
        print(f"distance table, default instance: numba {t['numba']:.2f}s, "
              f"python {t['python']:.2f}s ({t['python'] / t['numba']:.1f}x)")


if __name__ == "__main__":
    main()
