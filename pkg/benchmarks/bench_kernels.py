#!/usr/bin/env python3
"""Throughput of the per-cell flux kernels: compiled core vs NumPy fallback.

Times ``cell_quantities`` (energy density, flux, flux Jacobian per cell
gradient) for representative gauges and batch sizes, then a full exterior
solve with each backend.  Run from a checkout:

    python benchmarks/bench_kernels.py [--sizes 1000,100000] [--repeats 5]
"""

import argparse
import math
import os
import subprocess
import sys
import time

import numpy as np

from wulffcap._kernels import cell_quantities, compiled_available
from wulffcap.gauges import LpGauge, anisotropic_quadratic, euclidean

GAUGES = [
    ("euclidean p=2", euclidean(2), 2.0, 0.1),
    ("quadratic p=2.5", anisotropic_quadratic([[2.0, 0.6], [0.6, 1.0]]), 2.5, 0.1),
    ("l^4 p=3", LpGauge(4.0, 2), 3.0, 0.1),
]


def time_call(fn, repeats):
    best = math.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(sizes, repeats):
    rng = np.random.default_rng(0)
    print(f"{'gauge':<18} {'cells':>9} {'compiled':>12} {'fallback':>12} {'speedup':>9}")
    for label, gauge, p, eps in GAUGES:
        for n in sizes:
            g = rng.normal(size=(n, 2))
            args = (gauge, p, eps, g)
            t_fb = time_call(lambda: cell_quantities(*args, need_hess=True,
                                                     force_fallback=True), repeats)
            if compiled_available():
                t_c = time_call(lambda: cell_quantities(*args, need_hess=True),
                                repeats)
                print(f"{label:<18} {n:>9} {t_c * 1e3:>10.3f}ms {t_fb * 1e3:>10.3f}ms "
                      f"{t_fb / t_c:>8.1f}x")
            else:
                print(f"{label:<18} {n:>9} {'-':>12} {t_fb * 1e3:>10.3f}ms {'-':>9}")


SOLVE_SNIPPET = r"""
import time
import numpy as np
from wulffcap.gauges import LpGauge
from wulffcap.geometry import ConvexCone, WulffBall, build_region
from wulffcap.meshing import mesh_region
from wulffcap.solver import TruncatedProblem, solve_truncated

gauge = LpGauge(4.0, 2)
dual = gauge.dual()
region = build_region(ConvexCone.full_plane(), WulffBall(dual, 1.0), 8.0, dual)
mesh = mesh_region(region, %r)
t0 = time.perf_counter()
rep = solve_truncated(TruncatedProblem.exterior(mesh, gauge, 3.0))
print("%%.4f %%.12g" %% (time.perf_counter() - t0, rep.energy))
"""


def bench_solve(h):
    print(f"\nfull p=3 exterior solve, h={h} "
          f"(l^4 gauge, unit Wulff obstacle, R=8):")
    energies = {}
    for pure in ("0", "1"):
        env = dict(os.environ, WULFFCAP_PURE=pure)
        out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET % h], env=env,
                             capture_output=True, text=True, check=True)
        secs, energy = out.stdout.split()
        energies[pure] = energy
        name = "fallback" if pure == "1" else "compiled"
        print(f"  {name:<9} {float(secs):.3f}s  energy={energy}")
    if energies["0"] != energies["1"]:
        d = abs(float(energies["0"]) - float(energies["1"]))
        print(f"  energy difference between backends: {d:.3e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="1000,100000",
                    help="comma separated batch sizes")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--h", type=float, default=0.05,
                    help="mesh size for the end-to-end solve")
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    if not compiled_available():
        print("note: compiled extension not built; fallback timings only")
    bench_kernels(sizes, args.repeats)
    bench_solve(args.h)


if __name__ == "__main__":
    main()
