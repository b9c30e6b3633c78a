"""Benchmark the CSR aggregation kernel: compiled extension vs numpy
fallback vs dense matmul.

Run:  python benchmarks/bench_kernels.py [--nodes 20000] [--degree 12]
The sparse path takes over for graphs above the encoder's dense threshold,
so this measures the regime the compiled kernel exists for.
"""

import argparse
import time

import numpy as np

from auxweight import kernels
from auxweight.kernels import fallback
from auxweight.graphs import generate_sbm, normalized_adjacency_csr


def build_graph(n_nodes, degree, seed=0):
    blocks = [n_nodes // 2, n_nodes - n_nodes // 2]
    p = degree / n_nodes
    return generate_sbm(blocks, p_in=min(1.0, 1.5 * p), p_out=0.5 * p,
                        feature_dim=8, noise=0.1, seed=seed)


def timeit(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--nodes", type=int, default=20000)
    parser.add_argument("--degree", type=int, default=12)
    parser.add_argument("--cols", type=int, default=64)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    g = build_graph(args.nodes, args.degree)
    csr = normalized_adjacency_csr(g)
    x = np.ascontiguousarray(
        np.random.default_rng(0).standard_normal((g.num_nodes, args.cols)))
    nnz = len(csr.indices)
    print(f"graph: {g.num_nodes} nodes, {nnz} stored entries, "
          f"{args.cols} feature columns")
    print(f"active kernel at import: {kernels.IMPLEMENTATION}")

    rows = []
    if kernels.IMPLEMENTATION == "cython":
        t = timeit(lambda: kernels.spmm(*csr, x), args.repeats)
        rows.append(("spmm (cython)", t))
    t = timeit(lambda: fallback.spmm(*csr, x), args.repeats)
    rows.append(("spmm (numpy fallback)", t))

    if g.num_nodes <= 30000:
        dense = np.zeros((g.num_nodes, g.num_nodes))
        r = np.repeat(np.arange(g.num_nodes), np.diff(csr.offsets))
        dense[r, csr.indices] = csr.values
        t = timeit(lambda: dense @ x, args.repeats)
        rows.append(("dense matmul", t))

    base = rows[0][1]
    print(f"{'variant':28s} {'best of ' + str(args.repeats):>12s} {'relative':>9s}")
    for name, t in rows:
        print(f"{name:28s} {t * 1e3:9.2f} ms {t / base:8.2f}x")

    if kernels.IMPLEMENTATION == "cython":
        a = kernels.spmm(*csr, x)
        b = fallback.spmm(*csr, x)
        print(f"max |cython - fallback|: {np.abs(a - b).max():.3e}")


if __name__ == "__main__":
    main()
