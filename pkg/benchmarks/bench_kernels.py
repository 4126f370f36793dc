"""Time the numba and numpy backends on each hot kernel.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--size 512]

Prints one row per kernel with the best-of-``repeat`` wall time for each
backend and the speed-up. Numba compile time is excluded by a warm-up call.
"""
import argparse
import time

import numpy as np

from s2hreg import _accel
from s2hreg.assignment import hungarian
from s2hreg.features import descriptor, similarity
from s2hreg.geometry import nearest_neighbor, pairwise_sq_dists
from s2hreg.pipeline import RegistrationConfig, register
from s2hreg.sinkhorn import SinkhornConfig, augmented_sinkhorn
from s2hreg.synthdata import PairSpec, make_pair, procedural_shape


def best_time(fn, repeat: int) -> float:
    fn()  # warm-up (and JIT compile)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernels(size: int):
    rng = np.random.default_rng(0)
    base = procedural_shape("composite", size, 0)
    sample = max(4, size * 3 // 4)
    pair = make_pair(base, PairSpec(seed=0, base_size=size, sample_size=sample))
    feats = descriptor(pair.source)
    S = -rng.uniform(0, 4, size=(size, size))
    A = rng.normal(size=(2 * size, 2 * size))
    cfg = RegistrationConfig(iterations=2)
    return {
        "pairwise_sq_dists": lambda: pairwise_sq_dists(pair.source.points, pair.target.points),
        "nearest_neighbor": lambda: nearest_neighbor(pair.source, pair.target),
        "descriptor": lambda: descriptor(pair.source),
        "similarity": lambda: similarity(feats, feats),
        "sinkhorn": lambda: augmented_sinkhorn(S, SinkhornConfig()),
        "hungarian": lambda: hungarian(A),
        "register(2 iters)": lambda: register(pair.source, pair.target, cfg),
    }


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--size", type=int, default=512, help="points per cloud")
    a = ap.parse_args(argv)
    print(f"{'kernel':<20}{'numba s':>12}{'numpy s':>12}{'speed-up':>10}")
    for name, fn in kernels(a.size).items():
        with _accel.using("numba"):
            tn = best_time(fn, a.repeat)
        with _accel.using("numpy"):
            tp = best_time(fn, a.repeat)
        print(f"{name:<20}{tn:>12.4f}{tp:>12.4f}{tp / tn:>9.1f}x")


if __name__ == "__main__":
    main()
