#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run once with numba active (default) and once with the fallback:

    python benchmarks/bench_kernels.py
    PROXILAB_DISABLE_NUMBA=1 python benchmarks/bench_kernels.py

The heatmap-scale ray casting is the hottest production path (a 256x256 grid
is ~65k containment tests plus 4 rays each per request).
"""

import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from proxilab import _kernels as k  # noqa: E402

L_SHAPE = np.array([[0.0, 0.0], [6.0, 0.0], [6.0, 5.0], [3.0, 5.0], [3.0, 3.0], [0.0, 3.0]])


def bench(label, fn, *args, repeats=5):
    fn(*args)  # warm-up (includes JIT compilation on the numba path)
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    best = min(times)
    print(f"{label:38s} {best * 1e3:9.3f} ms")
    return best


def main():
    rng = np.random.default_rng(0)
    n = 256 * 256
    xs = rng.uniform(-0.5, 6.5, size=n)
    ys = rng.uniform(-0.5, 5.5, size=n)
    vx, vy = np.ascontiguousarray(L_SHAPE[:, 0]), np.ascontiguousarray(L_SHAPE[:, 1])
    inside = k._contains_numpy(xs, ys, vx, vy)
    ix, iy = xs[inside], ys[inside]

    dist = rng.uniform(0.1, 5.0, size=200_000)
    cos = rng.uniform(-1.0, 1.0, size=200_000)

    from proxilab.nnmodel import SmoothingConfig, _savgol_operator

    op = _savgol_operator(1001, SmoothingConfig())
    Q = rng.dirichlet(np.ones(1001), size=4096)

    mode = "numba" if k.USING_NUMBA else "numpy fallback"
    print(f"active path: {mode}  (PROXILAB_DISABLE_NUMBA toggles)")
    print(f"{'kernel':38s} {'best':>9s}")
    bench(f"contains          ({n} pts)", k.contains, xs, ys, vx, vy)
    bench(f"edge_distance     ({n} pts)", k.edge_distance, xs, ys, vx, vy)
    bench(f"ray_distances     ({len(ix)} pts)", k.ray_distances, ix, iy, vx, vy)
    bench("sf_scores         (200k pts)", k.sf_scores, 90.0, 1.2, 0.4, 0.3, dist, cos)
    bench("banded_filter     (4096x1001)", k.banded_filter,
          Q, op.weights, op.starts, op.widths)


if __name__ == "__main__":
    main()
