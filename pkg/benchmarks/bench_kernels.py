"""Timing comparison of the numba kernels against their numpy fallbacks.

Run: python benchmarks/bench_kernels.py [--repeats N]
The same dispatch switch is available at runtime via UNFILTER_BACKEND.
"""

import argparse
import time

import numpy as np

from unfilter import kernels


def time_call(fn, *args, repeats=5):
    fn(*args)  # warmup (includes JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--size", type=int, default=512, help="test image side length")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    rgb_a = rng.random((args.size, args.size, 3))
    rgb_b = rng.random((args.size, args.size, 3))
    lab_a = kernels.srgb_to_lab_numpy(rgb_a)
    lab_b = kernels.srgb_to_lab_numpy(rgb_b)
    points = lab_a.reshape(-1, 3)[:: max(1, args.size // 64)]
    centroids = points[rng.choice(len(points), 5, replace=False)]

    rows = [
        ("srgb_to_lab", (rgb_a,), kernels.srgb_to_lab_numpy, kernels.srgb_to_lab_numba),
        ("ciede2000_map", (lab_a, lab_b), kernels.ciede2000_map_numpy, kernels.ciede2000_map_numba),
        ("kmeans_assign", (points, centroids), kernels.kmeans_assign_numpy, kernels.kmeans_assign_numba),
    ]

    print(f"image {args.size}x{args.size}, {len(points)} k-means points, "
          f"best of {args.repeats}\n")
    print(f"{'kernel':<16}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, call_args, numpy_fn, numba_fn in rows:
        t_np = time_call(numpy_fn, *call_args, repeats=args.repeats)
        if not kernels.HAS_NUMBA:
            print(f"{name:<16}{t_np * 1e3:>10.2f}ms{'n/a':>12}{'':>10}")
            continue
        t_nb = time_call(numba_fn, *call_args, repeats=args.repeats)
        print(f"{name:<16}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
