"""Compare the numba descent kernels against the pure-numpy fallback.

Times the three kernel entry points on a realistically grown forest plus
the end-to-end engine loop on both backends. Run:

    python benchmarks/bench_kernels.py [--window 1024] [--trees 32]

The same numbers can be reproduced with the env flag selection
(STREAMLENS_NO_NUMBA=1) instead of the explicit backend objects used here.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from streamlens import _kernels
from streamlens.engine import Engine, EngineConfig
from streamlens.forest import ForestConfig, OnlineIsolationForest
from streamlens.ingest import SyntheticSpec, gen_synthetic


def grow_forest(backend, trees, window, dim, seed=7):
    forest = OnlineIsolationForest(
        ForestConfig(num_trees=trees, window=window, seed=seed), dim, backend=backend
    )
    rng = np.random.default_rng(0)
    live = {}
    for i in range(2 * window):
        x = rng.standard_normal(dim)
        live[i] = x
        forest.learn(i, x)
        if len(live) > window:
            oldest = min(live)
            forest.forget(oldest, live.pop(oldest))
    return forest, live


def time_call(fn, repeats):
    fn()  # warmup (includes JIT compilation on the numba path)
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(backend, trees, window, dim):
    forest, live = grow_forest(backend, trees, window, dim)
    a = forest._arena
    rng = np.random.default_rng(1)
    x1 = np.ascontiguousarray(rng.standard_normal((1, dim)))
    x_ice = np.ascontiguousarray(rng.standard_normal((dim * 20, dim)))
    out = {}
    out["descend score (N=1)"] = time_call(
        lambda: backend.forest_depths(
            a.feature, a.left, a.right, a.threshold, forest._roots, x1
        ),
        200,
    )
    out["descend ICE (N=%d)" % (dim * 20)] = time_call(
        lambda: backend.forest_depths(
            a.feature, a.left, a.right, a.threshold, forest._roots, x_ice
        ),
        200,
    )

    probe = rng.standard_normal(dim)
    next_id = 10 * window

    def learn_forget():
        nonlocal next_id
        forest.learn(next_id, probe)
        forest.forget(next_id, probe)
        next_id += 1

    out["learn+forget"] = time_call(learn_forget, 200)
    return out


def bench_engine(backend_name, length=3000):
    # Engine picks the module-level backend; emulate the env-flag path by
    # passing the backend explicitly through the forest.
    backend = _kernels.available_backends()[backend_name]
    config = EngineConfig()
    engine = Engine(config, backend=backend)
    spec = SyntheticSpec(
        dim=9, length=length, seed=3, smoothing=0.5,
        regimes=[{"start": 0, "mean": [0.0] * 9, "scale": [1.0] * 9}],
    )
    stream, _ = gen_synthetic(spec)
    warm = length // 5
    for inst in stream[:warm]:
        engine.process(inst)
    t0 = time.perf_counter()
    for inst in stream[warm:]:
        engine.process(inst)
    return (length - warm) / (time.perf_counter() - t0)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--trees", type=int, default=32)
    parser.add_argument("--window", type=int, default=1024)
    parser.add_argument("--dim", type=int, default=9)
    parser.add_argument("--engine-length", type=int, default=3000)
    args = parser.parse_args()

    backends = _kernels.available_backends()
    print(f"backends available: {', '.join(backends)}")
    print(f"forest: {args.trees} trees, window {args.window}, dim {args.dim}\n")

    rows = {name: bench_kernels(be, args.trees, args.window, args.dim)
            for name, be in backends.items()}
    labels = list(next(iter(rows.values())))
    width = max(len(l) for l in labels) + 2
    header = "kernel".ljust(width) + "".join(f"{n:>14}" for n in rows)
    if len(rows) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for label in labels:
        line = label.ljust(width)
        vals = [rows[n][label] for n in rows]
        for v in vals:
            line += f"{v * 1e6:>12.1f}us"
        if len(vals) == 2 and vals[0] > 0:
            fast, slow = min(vals), max(vals)
            line += f"{slow / fast:>9.1f}x"
        print(line)

    print("\nend-to-end engine (score + ICE sweep + learn + expire):")
    for name in backends:
        rate = bench_engine(name, args.engine_length)
        print(f"  {name:>6}: {rate:8.0f} instances/s")


if __name__ == "__main__":
    main()
