#!/usr/bin/env python3
"""Benchmark the numba and numpy backends of the hot kernels.

Usage: python3 benchmarks/bench_backends.py [--nsteps 2000] [--n 256]

Times the SDE ensemble chunk (drift + counter-based ziggurat noise) and the
raw normal generator on both backends, and verifies they agree on the same
stream.  KAWAHYDRO_BACKEND only selects the dispatch default; both paths are
exercised here explicitly.
"""

import argparse
import time

import numpy as np

from kawahydro import kernels, rng
from kawahydro.backend import HAVE_NUMBA


def time_fn(fn, *args, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--n", type=int, default=256, help="lattice size")
    ap.add_argument("--traj", type=int, default=16, help="ensemble size")
    ap.add_argument("--nsteps", type=int, default=2000, help="steps per chunk")
    args = ap.parse_args()

    n, n_traj, nsteps = args.n, args.traj, args.nsteps
    g = np.random.default_rng(0)
    states = g.standard_normal((n_traj, n)) * 0.3
    states -= states.mean(axis=1, keepdims=True)
    keys = np.array([rng.stream_key(1, 2 * j + 1) for j in range(n_traj)],
                    dtype=np.uint64)
    dt = 0.5 / (4 * n * n * 4.0)
    avec = np.zeros(n)
    elems = nsteps * n * n_traj

    print(f"SDE chunk: N={n}, {n_traj} trajectories, {nsteps} steps "
          f"({elems:.2e} element-steps)")

    s_np = states.copy()
    t_np = time_fn(kernels.sde_chunk_np, s_np, keys, 0, nsteps, dt, 1, 0.0,
                   avec, 0.0)
    print(f"  numpy : {t_np:8.3f} s   {t_np / elems * 1e9:7.2f} ns/elem")

    if HAVE_NUMBA:
        kernels.sde_chunk_nb(states.copy(), keys, 0, 2, dt, 1, 0.0, avec, 0.0)
        s_nb = states.copy()
        t_nb = time_fn(kernels.sde_chunk_nb, s_nb, keys, 0, nsteps, dt, 1, 0.0,
                       avec, 0.0)
        print(f"  numba : {t_nb:8.3f} s   {t_nb / elems * 1e9:7.2f} ns/elem "
              f"({t_np / t_nb:.1f}x speedup)")
        err = np.max(np.abs(s_nb - s_np)) / max(np.max(np.abs(s_np)), 1e-30)
        print(f"  agreement after {nsteps} steps: max rel deviation {err:.2e}")
    else:
        print("  numba : unavailable")

    n_draws = 2_000_000
    key = rng.stream_key(7, 0)
    t_np = time_fn(rng.normals_np, key, 0, n_draws)
    print(f"normals ({n_draws:.0e} draws)")
    print(f"  numpy : {t_np:8.3f} s   {t_np / n_draws * 1e9:7.2f} ns/normal")
    if HAVE_NUMBA:
        rng.normals_nb(key, 0, 1000)
        t_nb = time_fn(rng.normals_nb, key, 0, n_draws)
        print(f"  numba : {t_nb:8.3f} s   {t_nb / n_draws * 1e9:7.2f} ns/normal "
              f"({t_np / t_nb:.1f}x speedup)")


if __name__ == "__main__":
    main()
