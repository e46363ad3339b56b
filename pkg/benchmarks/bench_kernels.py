"""Compare the numba and numpy kernel paths.

Times one client's local training (7 epochs of mini-batch Adam on a
100-example shard) and scoring of a 10K-row test matrix, for a few hash
dimensions.  Run with ``python3 benchmarks/bench_kernels.py [--repeat N]``.
"""

import argparse
import time

import numpy as np

from fedharm import _accel
from fedharm.features import featurize_examples
from fedharm.kernels import lr_scores_jit, lr_scores_np, lr_train_epoch_jit, lr_train_epoch_np
from fedharm.synth import SynthSpec, generate_examples


def train(fn, x, dim, epochs=7, seed=0):
    rng = np.random.default_rng(seed)
    params = np.zeros(dim + 1)
    m = np.zeros_like(params)
    v = np.zeros_like(params)
    step = 0
    for _ in range(epochs):
        order = rng.permutation(x.n_rows).astype(np.int64)
        step = fn(params, m, v, step, x.indptr, x.indices, x.data, x.labels, order,
                  10, 0.001, 0.9, 0.999, 1e-8)
    return params


def best_of(f, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = f()
        times.append(time.perf_counter() - t)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        print("numba is not installed; only the numpy path can run")
        return

    examples = generate_examples(SynthSpec(n_examples=10_100, seed=3))
    print(f"{'kernel':24s} {'dim':>7s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for dim in (1 << 12, 1 << 15, 1 << 18):
        shard = featurize_examples(examples[:100], dim)
        test = featurize_examples(examples[100:], dim)
        train(lr_train_epoch_jit, shard, dim)  # compile
        t_jit, p_jit = best_of(lambda: train(lr_train_epoch_jit, shard, dim), args.repeat)
        t_np, p_np = best_of(lambda: train(lr_train_epoch_np, shard, dim), args.repeat)
        diff = np.max(np.abs(p_jit - p_np))
        print(f"{'local_train (7 epochs)':24s} {dim:7d} {1e3 * t_jit:10.2f} {1e3 * t_np:10.2f} "
              f"{t_np / t_jit:8.2f} {diff:10.2e}")

        lr_scores_jit(p_jit, test.indptr, test.indices, test.data)
        t_jit, s_jit = best_of(lambda: lr_scores_jit(p_jit, test.indptr, test.indices, test.data), args.repeat)
        t_np, s_np = best_of(lambda: lr_scores_np(p_jit, test.indptr, test.indices, test.data), args.repeat)
        print(f"{'scores (10K rows)':24s} {dim:7d} {1e3 * t_jit:10.2f} {1e3 * t_np:10.2f} "
              f"{t_np / t_jit:8.2f} {np.max(np.abs(s_jit - s_np)):10.2e}")


if __name__ == "__main__":
    main()
