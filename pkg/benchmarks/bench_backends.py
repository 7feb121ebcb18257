"""Time the numba kernels against the pure-numpy fallback.

    python benchmarks/bench_backends.py [--repeat 5]

The numba column excludes JIT compilation (one warm-up call per kernel).
"""
import argparse
import timeit

import numpy as np

from prunenet import _backend, kernels
from prunenet.model import ModelConfig, synthesize_model
from prunenet.policy import PolicyParams, TrainConfig, policy_gradient


def cases(rng):
    out = []
    for n in (64, 256, 512):
        x = rng.standard_normal((n, n))
        a = x @ x.T
        out.append((f"sym_eigvals n={n}", lambda a=a: kernels.sym_eigvals(a)))
    for n in (1_000, 100_000):
        a = np.sort(rng.standard_normal(n))
        b = np.sort(rng.standard_normal(n // 2) + 0.1)
        out.append((f"ks_statistic n={n}", lambda a=a, b=b: kernels.ks_statistic(a, b)))
        out.append((f"ad_statistic n={n}", lambda a=a, b=b: kernels.ad_statistic(a, b)))
    model = synthesize_model(ModelConfig(64, 256, 8, 16), 0)
    policy = PolicyParams.initialize(256, 64, 0)
    cfg = TrainConfig()
    out.append(("policy episode 8x256x64", lambda: policy_gradient(model, policy, cfg)))
    return out


def best_of(fn, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(fn, number=1), 1e-6)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = ["numba", "numpy"] if _backend.HAS_NUMBA else ["numpy"]
    rows = []
    for name, fn in cases(np.random.default_rng(0)):
        timings = {}
        for backend in backends:
            previous = _backend.set_backend(backend)
            try:
                fn()  # warm-up / compile
                timings[backend] = best_of(fn, args.repeat)
            finally:
                _backend.set_backend(previous)
        rows.append((name, timings))
    print(f"{'case':<28}" + "".join(f"{b + ' (ms)':>14}" for b in backends) + f"{'numpy/numba':>14}")
    for name, t in rows:
        line = f"{name:<28}" + "".join(f"{1e3 * t[b]:>14.3f}" for b in backends)
        if len(t) == 2:
            line += f"{t['numpy'] / t['numba']:>14.2f}"
        print(line)


if __name__ == "__main__":
    main()
