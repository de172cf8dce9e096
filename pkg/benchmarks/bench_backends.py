"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_backends.py [--n 100000] [--repeat 3]

Each kernel is run once first so JIT compilation is not counted.
"""
import argparse
import time

import numpy as np

from critwalk import use_backend
from critwalk._accel import HAVE_NUMBA
from critwalk.dfs_encoding import decompose_component
from critwalk.graphgen import GnpParams, bfs_distances, component_labels, largest_component, sample_gnp
from critwalk.walk_engine import return_probabilities, simulate_walks


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    params = GnpParams(args.n, 0.0, seed=1)
    edges = sample_gnp(params)
    comp = largest_component(edges, args.n)
    # a bigger graph for the per-vertex kernels
    big = largest_component(sample_gnp(GnpParams(args.n, 3.0, seed=1)), args.n)
    cases = {
        "sample_gnp": lambda: sample_gnp(params),
        "component_labels": lambda: component_labels(edges - 1, args.n),
        "bfs": lambda: bfs_distances(big, 0),
        "dfs_decompose": lambda: decompose_component(big),
        "walks 50x10^4": lambda: simulate_walks(comp, np.zeros(50, dtype=np.int64), 10_000, 3),
        "heat kernel 2000 steps": lambda: return_probabilities(comp, 0, 2000),
    }
    print(f"n = {args.n}; largest component {comp.size} vertices, larger one {big.size}")
    print(f"{'kernel':<24}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, fn in cases.items():
        with use_backend("numpy"):
            a = best_of(fn, args.repeat)
        with use_backend("numba"):
            b = best_of(fn, args.repeat)
        print(f"{name:<24}{a:>12.4f}{b:>12.4f}{a / b:>10.1f}")


if __name__ == "__main__":
    main()
