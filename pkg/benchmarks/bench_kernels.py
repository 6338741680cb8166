"""Compiled kernels vs the pure-Python fallback.

Runs each kernel on the same inputs under both implementations, checks the
answers agree, and reports median wall time. The end-to-end rows time
decomposition and Theta* in a subprocess with CELLPLAN_PURE toggled.

    python3 benchmarks/bench_kernels.py [--L 50] [--repeat 5]
"""
import argparse
import json
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from cellplan import _fallback
from cellplan.grid import WorldSpec, generate_city_world

try:
    from cellplan import _kernels
except ImportError:
    _kernels = None


def timeit(fn, repeat):
    out, ts = None, []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        ts.append(time.perf_counter() - t0)
    return out, statistics.median(ts)


def kernel_cases(grid, rng, n_los=200, n_hull=200):
    occ = np.ascontiguousarray(grid.occupancy, dtype=np.uint8)
    dims = np.asarray(grid.dims, dtype=float)
    pts = rng.uniform(0, 1, size=(n_los, 2, 3)) * dims
    axes = np.eye(3)
    boxes_lo = np.ascontiguousarray(np.argwhere(occ).astype(float))
    boxes_hi = np.ascontiguousarray(boxes_lo + 1.0)
    hulls = []
    for _ in range(n_hull):
        lo = rng.uniform(0, 0.8, 3) * dims
        hi = lo + rng.uniform(1, 5, 3)
        hulls.append((axes @ lo, axes @ hi))
    free = np.argwhere(occ == 0)
    s, g = free[0], free[-1]

    def los(impl):
        return lambda: [impl.line_of_sight(occ, a, b) for a, b in pts]

    def hull(impl):
        return lambda: [impl.hull_hits_boxes(boxes_lo, boxes_hi, axes, h0, h1, 1e-9) for h0, h1 in hulls]

    def search(impl):
        return lambda: impl.grid_search(occ, tuple(int(v) for v in s), tuple(int(v) for v in g),
                                        s + 0.5, g + 0.5, True)[0].tolist()

    return {"line_of_sight": los, "hull_hits_boxes": hull, "grid_search": search}


def end_to_end(L, pure):
    code = (
        "import time,json;from cellplan import kernels;"
        "from cellplan.grid import WorldSpec,generate_city_world;"
        "from cellplan.decomp import decompose;from cellplan.baseline import theta_star;"
        f"g=generate_city_world(WorldSpec(L={L},H=50,block=50,seed=0));"
        "t=time.perf_counter();d=decompose(g);td=time.perf_counter()-t;"
        "e=g.extent;t=time.perf_counter();p=theta_star(g,[1,1,1],e-1);tt=time.perf_counter()-t;"
        "print(json.dumps([kernels.BACKEND,d.cell_count,td,tt,p.length if p else None]))"
    )
    env = dict(os.environ, CELLPLAN_PURE="1" if pure else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--L", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _kernels is None:
        print("compiled extension not built; nothing to compare")
        return 1

    grid = generate_city_world(WorldSpec(L=args.L, H=50, block=50, seed=0))
    cases = kernel_cases(grid, np.random.default_rng(0))
    print(f"{'kernel':<18}{'compiled s':>12}{'python s':>12}{'speedup':>10}")
    for name, make in cases.items():
        rc, tc = timeit(make(_kernels), args.repeat)
        rp, tp = timeit(make(_fallback), max(1, args.repeat // 2))
        assert rc == rp, f"{name}: backends disagree"
        print(f"{name:<18}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}")

    c = end_to_end(args.L, False)
    p = end_to_end(args.L, True)
    assert c[1] == p[1] and c[4] == p[4], "end-to-end results differ between backends"
    print(f"{'decompose':<18}{c[2]:>12.3f}{p[2]:>12.3f}{p[2] / c[2]:>10.1f}")
    print(f"{'theta_star':<18}{c[3]:>12.3f}{p[3]:>12.3f}{p[3] / c[3]:>10.1f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
