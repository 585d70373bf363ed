#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the three hot kernels on a 256x256 grid and one full continuation
solve on a 64x64 problem per backend. Run after building the extension:

    python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from multibang import _kernels
from multibang.penalty import AdmissibleSet, ProxParams, ProxTables
from multibang.poisson import Grid, LinearSolveOptions, ScalarField, poisson_solve


def timeit(fn, repeats=200):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(impl, n=256):
    rng = np.random.default_rng(0)
    N = n * n
    inv_h2 = float((n + 1) ** 2)
    u = rng.standard_normal(N)
    d = np.where(rng.random(N) < 0.01, 1e6, 0.0)
    tmp = np.empty(N)
    out = np.empty(N)
    out_u = np.empty(N)
    out_band = np.empty(N, dtype=np.uint8)
    U = AdmissibleSet((0.0, 0.1, 0.15))
    tables = ProxTables(ProxParams(1e-4, 1e-6), U)
    p = rng.uniform(tables.thresholds[0] - 1e-4, tables.thresholds[-1] + 1e-4, N)
    return {
        "laplacian": timeit(lambda: impl.laplacian(u, n, inv_h2, out)),
        "schur_matvec": timeit(lambda: impl.schur_matvec(u, d, n, inv_h2, tmp, out)),
        "prox_field": timeit(
            lambda: impl.prox_field(
                p, tables.values, tables.thresholds, tables.centers,
                tables.gamma, out_u, out_band,
            )
        ),
    }


def bench_solve(n=64):
    from multibang.ssn import SolverConfig, solve_with_continuation

    U = AdmissibleSet((0.0, 0.1, 0.15))
    grid = Grid(n)
    x1, x2 = grid.coords()
    big = (x1 - 0.45) ** 2 + (x2 - 0.55) ** 2 < 0.1
    small = (x1 - 0.4) ** 2 + (x2 - 0.6) ** 2 < 0.02
    u_true = ScalarField(grid, 0.1 * big + 0.05 * small)
    y = poisson_solve(u_true, LinearSolveOptions(rel_tol=1e-12))
    t0 = time.perf_counter()
    solve_with_continuation(y, 1e-4, U, SolverConfig())
    return time.perf_counter() - t0


def main():
    backends = _kernels.backends()
    print(f"backends available: {', '.join(backends)}")
    results = {name: bench_kernels(impl) for name, impl in backends.items()}
    kernels = ["laplacian", "schur_matvec", "prox_field"]
    print(f"\nper-call times on 256x256 fields:")
    header = f"{'kernel':>14s}" + "".join(f"{name:>14s}" for name in results)
    if len(results) == 2:
        header += f"{'speedup':>10s}"
    print(header)
    for k in kernels:
        line = f"{k:>14s}"
        for name in results:
            line += f"{results[name][k] * 1e6:>12.1f}us"
        if len(results) == 2:
            ratio = results["numpy"][k] / results["compiled"][k]
            line += f"{ratio:>9.1f}x"
        print(line)

    print(f"\nfull continuation solve (n=64, alpha=1e-4):")
    active = (_kernels.laplacian, _kernels.schur_matvec, _kernels.prox_field)
    try:
        for name, impl in backends.items():
            _kernels.laplacian = impl.laplacian
            _kernels.schur_matvec = impl.schur_matvec
            _kernels.prox_field = impl.prox_field
            print(f"{name:>14s}: {bench_solve():.2f}s")
    finally:
        _kernels.laplacian, _kernels.schur_matvec, _kernels.prox_field = active


if __name__ == "__main__":
    main()
