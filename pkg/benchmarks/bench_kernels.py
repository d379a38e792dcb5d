#!/usr/bin/env python3
"""Time the numba kernels against the numpy fallback and check they agree.

    python benchmarks/bench_kernels.py [--repeat 5]

With GLASS_COMPLEXITY_NO_NUMBA=1 the "numba" column runs the same code as plain Python.
"""
import argparse
import time

import numpy as np

from glass_complexity import _kernels
from glass_complexity._accel import NUMBA_ENABLED
from glass_complexity.mde import covering_radius, default_grid, spectral_density
from glass_complexity.params import ModelParams
from glass_complexity.twopoint import h_overlap, k_func, overlap_grid


def best_of(fn, repeat):
    fn()  # warm-up, includes compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def row(name, t_nb, t_np, err):
    print(f"{name:<34s} {t_nb * 1e3:10.2f} {t_np * 1e3:10.2f} {t_np / t_nb:8.1f}x   max diff {err:.2e}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"numba enabled: {NUMBA_ENABLED}")
    print(f"{'kernel':<34s} {'numba ms':>10s} {'numpy ms':>10s} {'speedup':>9s}")

    params = ModelParams(3, 3, 0.5)
    xs = default_grid(params)
    coeffs, radius = params.variance_profile, covering_radius(params)
    for mode in ("continuation", "cold"):
        run = lambda b: _kernels.sweep(xs, 1e-6, coeffs, 1e-12, 200, radius, mode=mode, backend=b)
        t_nb, a = best_of(lambda: run("numba"), args.repeat)
        t_np, b = best_of(lambda: run("numpy"), args.repeat)
        row(f"mde sweep ({mode}, n={xs.size})", t_nb, t_np, float(np.max(np.abs(a[0] - b[0]))))

    g = overlap_grid(300)
    R, T = np.meshgrid(g, g, indexing="ij")
    p96 = ModelParams(96, 96, 0.5)
    hv, kv = np.asarray(h_overlap(p96, R, T)), np.asarray(k_func(96, 96, R, T))
    es = np.linspace(-3.0, 3.0, 21)
    t_nb, a = best_of(lambda: _kernels.qgrid_max(hv, kv, es, backend="numba"), args.repeat)
    t_np, b = best_of(lambda: _kernels.qgrid_max(hv, kv, es, backend="numpy"), args.repeat)
    row("Q grid max (300^2 x 21)", t_nb, t_np, float(np.max(np.abs(a[0] - b[0]))))

    m = spectral_density(params)
    es = np.linspace(-4.0, 4.0, 401)
    t_nb, a = best_of(lambda: _kernels.log_potential_grid(m.grid, m.density, es, backend="numba"), args.repeat)
    t_np, b = best_of(lambda: _kernels.log_potential_grid(m.grid, m.density, es, backend="numpy"), args.repeat)
    row("gridded log-potential", t_nb, t_np, float(np.max(np.abs(a - b))))


if __name__ == "__main__":
    main()
