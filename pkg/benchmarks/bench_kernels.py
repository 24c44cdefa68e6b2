"""Time the numba and pure-numpy flavours of each hot kernel on solver-sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both flavours are imported directly, so the MILDSPDE_DISABLE_NUMBA flag does
not matter here. Each line reports the best wall time over the repeats and the
largest absolute difference between the two results.
"""

import argparse
import time

import numpy as np

from mildspde import kernels
from mildspde._accel import USE_NUMBA


def best_of(fn, args, repeat):
    fn(*args)  # warm-up, includes JIT compilation for the numba flavour
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases(rng):
    R, n, N = 2000, 256, 8
    decay = np.exp(-rng.uniform(0.0, 0.5, size=(n, N)))
    forcing = rng.standard_normal((R, n, N))
    x0 = rng.standard_normal((R, N))
    yield "linear_recursion", (kernels.linear_recursion_numba, kernels.linear_recursion_numpy), \
        (decay, forcing, x0)

    t = np.linspace(0.0, 1.0, 2001)[1:]
    vals = np.cumsum(rng.standard_normal((t.size, N)), axis=0) * 0.01
    yield "holder_pairs", (kernels.holder_pairs_numba, kernels.holder_pairs_numpy), \
        (t, vals, 0.2, 0.1)

    paths = np.cumsum(rng.standard_normal((2000, 1001, N)), axis=1)
    lags = np.array([1, 2, 4, 8, 16, 32, 64], dtype=np.int64)
    yield "increment_moments", (kernels.increment_moments_numba, kernels.increment_moments_numpy), \
        (paths, lags, 2.0, 100, 1000)


def main():
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    print(f"default backend in this process: {'numba' if USE_NUMBA else 'numpy'}")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20}{'numba [s]':>12}{'numpy [s]':>12}{'speedup':>10}{'max |diff|':>14}")
    for name, (fast, slow), inputs in cases(rng):
        t_nb, out_nb = best_of(fast, inputs, args.repeat)
        t_np, out_np = best_of(slow, inputs, args.repeat)
        diff = float(np.max(np.abs(np.asarray(out_nb) - np.asarray(out_np))))
        print(f"{name:<20}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>10.1f}{diff:>14.2e}")


if __name__ == "__main__":
    main()
