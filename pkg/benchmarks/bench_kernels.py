"""Compare the compiled and pure-Python Euler-Maruyama kernels.

Usage: python benchmarks/bench_kernels.py [--steps N]

Both backends consume the same random stream, so the script also checks
that they return identical paths.
"""
import argparse
import time

import numpy as np

from geomews import _fallback
from geomews.model import ModelParams, find_equilibria, phyto_system
from geomews.simulate import substream

try:
    from geomews import _kernels
except ImportError:
    _kernels = None


def time_path(backend, system, x0, n_steps, repeats=3):
    args = (system.kind, system.kernel_params, np.asarray(system.sigma, dtype=float), x0,
            np.asarray(system.lower, dtype=float), np.asarray(system.upper, dtype=float))
    best = np.inf
    out = None
    for _ in range(repeats):
        rng = substream(0, 0)
        t0 = time.perf_counter()
        out = backend.em_path(*args, 0.01, n_steps, 1, rng)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=200_000)
    args = ap.parse_args()
    p = ModelParams().with_noise(0.02)
    system = phyto_system(p)
    x0 = np.ascontiguousarray(find_equilibria(p).background.state)

    t_py, path_py = time_path(_fallback, system, x0, args.steps)
    print(f"python   : {1e9 * t_py / args.steps:9.1f} ns/step")
    if _kernels is None:
        print("compiled : extension not built")
        return
    t_c, path_c = time_path(_kernels, system, x0, args.steps)
    print(f"compiled : {1e9 * t_c / args.steps:9.1f} ns/step")
    print(f"speedup  : {t_py / t_c:9.1f}x")
    print(f"identical paths: {np.array_equal(path_py, path_c)}")


if __name__ == "__main__":
    main()
