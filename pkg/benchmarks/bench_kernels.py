"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--csv out.csv]

Each kernel runs once untimed first so JIT compilation is excluded, and the
outputs of both paths are compared before timing.
"""

import argparse
import csv
import sys
import timeit

import numpy as np

from cte import _kernels


def cases(rng):
    mag = rng.integers(0, 50, (16, 16)).astype(np.int64)
    sector = rng.integers(0, 4, (16, 16)).astype(np.int64)
    nms = _kernels.IMPLEMENTATIONS["numpy"]["nms"](mag, sector)
    X = rng.normal(size=(2000, 16))
    graph = _kernels.IMPLEMENTATIONS["numpy"]["radius_graph"](X, 3.0)
    w = np.ones(len(X))
    labels = rng.integers(0, 8, len(X)).astype(np.int64)
    Q = rng.normal(size=(500, 16))
    return {
        "nms 16x16": ("nms", (mag, sector)),
        "hysteresis 16x16": ("hysteresis", (nms & (mag > 35), nms & (mag > 10))),
        "radius_graph 2000x16": ("radius_graph", (X, 3.0)),
        "dbscan_graph 2000": ("dbscan_graph", (*graph, w, 5.0)),
        "silhouette 2000x16": ("silhouette_samples", (X, labels, w)),
        "nearest 500 vs 2000": ("nearest", (Q, X)),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, atol=1e-12)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--csv")
    args = p.parse_args(argv)
    if "numba" not in _kernels.IMPLEMENTATIONS:
        print("numba is not available; nothing to compare", file=sys.stderr)
        return 1
    rows = []
    for name, (fn, a) in cases(np.random.default_rng(0)).items():
        np_fn = _kernels.IMPLEMENTATIONS["numpy"][fn]
        nb_fn = _kernels.IMPLEMENTATIONS["numba"][fn]
        if not same(np_fn(*a), nb_fn(*a)):
            raise SystemExit(f"{name}: numba and numpy disagree")
        t_np = min(timeit.repeat(lambda: np_fn(*a), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: nb_fn(*a), number=1, repeat=args.repeat))
        rows.append([name, f"{t_np * 1e3:.3f}", f"{t_nb * 1e3:.3f}", f"{t_np / t_nb:.1f}"])
    header = ["kernel", "numpy_ms", "numba_ms", "speedup"]
    print(f"{header[0]:<24}{header[1]:>12}{header[2]:>12}{header[3]:>10}")
    for r in rows:
        print(f"{r[0]:<24}{r[1]:>12}{r[2]:>12}{r[3]:>10}")
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(header)
            wr.writerows(rows)
    return 0


if __name__ == "__main__":
    sys.exit(main())
