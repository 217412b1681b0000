#!/usr/bin/env python3
"""Benchmark the compiled kernels against the numpy/scipy fallback.

Two views: microbenchmarks of each kernel on attack-shaped inputs, and an
end-to-end attack throughput comparison on a synthetic citation-like graph.

    python benchmarks/bench_kernels.py [--end-to-end-trials N]
"""
import argparse
import time

import numpy as np

from poisonprobe import _pykernels

try:
    from poisonprobe import _ckernels
except ImportError:
    _ckernels = None


def bench(fn, *args, repeat=2000):
    fn(*args)  # warm up
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def micro(impls):
    rng = np.random.default_rng(0)
    d, h, deg = 1433, 16, 6
    # attack-shaped operands: one poison row, a small affected neighborhood
    xt = rng.standard_normal((1, d))
    w = rng.standard_normal((1, d))
    gx = rng.standard_normal((1, d))
    pre = rng.standard_normal((deg, h))
    dpre = rng.standard_normal((deg, h))
    adj = rng.standard_normal((deg, h))
    m = np.zeros((1, d))
    v = np.zeros((1, d))
    indptr = np.arange(0, 3 * (deg + 1), 3, dtype=np.int64)
    indices = rng.integers(0, deg, size=indptr[-1]).astype(np.int64)
    data = rng.random(indptr[-1])
    dense = rng.standard_normal((deg, h))

    cases = {
        "tanh_reparam (1x1433)": lambda k: k.tanh_reparam(xt, w),
        "tanh_reparam_grad": lambda k: k.tanh_reparam_grad(xt, w, gx),
        "relu_delta (6x16)": lambda k: k.relu_delta(pre, dpre),
        "relu_mask": lambda k: k.relu_mask(pre, dpre, adj),
        "adam_step (1x1433)": lambda k: k.adam_step(w, gx, m, v, 1, 0.01, 0.9, 0.999, 1e-8),
        "csr matmul (6x6 @ 6x16)": lambda k: k.csr_dense_matmul(indptr, indices, data, dense),
        "csr.T matmul": lambda k: k.csr_t_dense_matmul(indptr, indices, data, deg, dense),
    }
    name_w = max(len(n) for n in cases)
    header = f"{'kernel':<{name_w}}  " + "  ".join(f"{n:>10}" for n in impls)
    print(header)
    print("-" * len(header))
    for label, call in cases.items():
        cols = []
        for impl_name, impl in impls.items():
            cols.append(f"{bench(call, impl) * 1e6:9.2f}us")
        print(f"{label:<{name_w}}  " + "  ".join(f"{c:>10}" for c in cols))


def end_to_end(impls, trials):
    from poisonprobe import (AttackConfig, GcnModel, TrainConfig, backend, normalize,
                             poison_probe, train)
    from poisonprobe.data import make_splits
    from poisonprobe.incremental import BaseActivations
    from poisonprobe.synth import CITATION_LIKE, synthetic_citation_graph

    graph = synthetic_citation_graph(**CITATION_LIKE, seed=1)
    ahat = normalize(graph)
    splits = make_splits(graph, 0.2, seed=1)
    model = GcnModel.init("gcn2", graph.d, graph.class_count, seed=1)
    model, _ = train(model, graph, ahat, splits.train, splits.val,
                     TrainConfig(max_epochs=200, seed=1))
    base = BaseActivations(model, ahat, graph.X)
    rng = np.random.default_rng(2)
    triples = []
    while len(triples) < trials:
        u = int(rng.integers(graph.n))
        nbrs = graph.neighbors(u)
        if nbrs.size == 0:
            continue
        v = int(nbrs[rng.integers(nbrs.size)])
        clean = int(base.labels[u])
        triples.append((u, (clean + 1) % graph.class_count, v))

    names = ["csr_dense_matmul", "csr_t_dense_matmul", "tanh_reparam",
             "tanh_reparam_grad", "relu_delta", "relu_mask", "adam_step"]
    saved = {n: getattr(backend, n) for n in names}
    print(f"\nend-to-end: {trials} one-hop attacks, gcn2, "
          f"n={graph.n} d={graph.d} (default budget)")
    try:
        for impl_name, impl in impls.items():
            for n in names:
                setattr(backend, n, getattr(impl, n))
            start = time.perf_counter()
            wins = 0
            for u, t, v in triples:
                wins += poison_probe(model, ahat, graph.X, u, t, [v],
                                     AttackConfig(), base=base).success
            elapsed = time.perf_counter() - start
            print(f"  {impl_name:>3}: {elapsed:6.2f}s total, {elapsed / trials:5.2f}s/attack, "
                  f"{wins}/{trials} successful")
    finally:
        for n, fn in saved.items():
            setattr(backend, n, fn)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--end-to-end-trials", type=int, default=4)
    args = parser.parse_args()
    impls = {"py": _pykernels}
    if _ckernels is not None:
        impls["c"] = _ckernels
    else:
        print("compiled kernels not available; benchmarking fallback only")
    micro(impls)
    if args.end_to_end_trials > 0:
        end_to_end(impls, args.end_to_end_trials)


if __name__ == "__main__":
    main()
