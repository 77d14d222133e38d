#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Times the three hot paths: red-black Gauss-Seidel smoothing, a full
multigrid field solve, and rf trajectory integration (analytic force and
B-spline solved-field force). Run:

    python benchmarks/bench_backends.py [--quick]
"""

import argparse
import time

import numpy as np

from latticetrap.backend import set_backend, kernels
from latticetrap.dynamics import AnalyticField, drive_for_mathieu_q, integrate_trajectory
from latticetrap.fieldsolver import solve_laplace
from latticetrap.geometry import BoundaryGrid, ElectrodeStack, build_lattice_stack, rasterize
from latticetrap.interpolate import FieldWindow
from latticetrap.fieldsolver import gradient
from latticetrap.params import sr88_ion


def timed(fn, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_smoother(n, repeat):
    rng = np.random.default_rng(7)
    u = rng.standard_normal((n, n, n))
    f = np.zeros_like(u)
    free = np.ones(u.shape, dtype=np.uint8)
    free[0] = free[-1] = 0
    K = kernels()

    def sweep():
        K.gs_color(u, f, free, 1e-8, 0, 1.0)
        K.gs_color(u, f, free, 1e-8, 1, 1.0)

    sweep()  # jit warm-up / first-touch
    return timed(sweep, repeat)


def make_small_grid():
    stack = build_lattice_stack(ElectrodeStack(1.14e-3, 1.64e-3, (3, 3), 1e-3,
                                               top_plate_height=4e-3))
    return rasterize(stack, spacing=1.0e-4, margin=3e-3)


def bench_solve(grid):
    return timed(lambda: solve_laplace(grid, tol=1e-8, max_iter=200), repeat=1)


def bench_traj_analytic(nsteps):
    ion = sr88_ion()
    drive = drive_for_mathieu_q(ion, 0.3, 2 * np.pi * 7.7e6, 3.1e-3)
    duration = nsteps * (2 * np.pi / drive.Omega) / 200.0

    def run():
        integrate_trajectory(AnalyticField(r1=3.1e-3), ion, drive,
                             (2e-5, 0, 0), (0, 0, 0), duration)

    run()
    return timed(run, repeat=1)


def bench_traj_bspline(grid, nsteps):
    phi = solve_laplace(grid, tol=1e-8, max_iter=200)
    grad = gradient(phi)
    ion = sr88_ion()
    drive = drive_for_mathieu_q(ion, 0.1, 2 * np.pi * 7.7e6, 3.1e-3)
    from latticetrap.pseudopot import _find_minimum_on_field
    from latticetrap.fieldsolver import ScalarField3D
    e2 = ScalarField3D(origin=phi.origin, spacing=phi.spacing,
                       values=grad.magnitude_squared(), free=phi.free,
                       metadata=dict(phi.metadata))
    null = _find_minimum_on_field(e2, (1, 1))
    window = FieldWindow.from_vector_field(grad, null, 0.7e-3)
    duration = nsteps * (2 * np.pi / drive.Omega) / 200.0

    def run():
        integrate_trajectory(window, ion, drive, null + np.array([2e-5, 0, 0]),
                             (0, 0, 0), duration)

    run()
    return timed(run, repeat=1)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args()

    n_smooth = 64 if args.quick else 128
    nsteps = 20_000 if args.quick else 200_000
    nsteps_np = 2_000 if args.quick else 5_000

    results = {}
    for name in ("numba", "numpy"):
        set_backend(name)
        grid = make_small_grid()
        res = {
            "gs_sweep": bench_smoother(n_smooth, repeat=3),
            "mg_solve": bench_solve(grid),
            "traj_analytic": bench_traj_analytic(nsteps if name == "numba" else nsteps_np)
            / (nsteps if name == "numba" else nsteps_np),
            "traj_bspline": bench_traj_bspline(grid, nsteps // 10 if name == "numba"
                                               else nsteps_np // 10)
            / (nsteps // 10 if name == "numba" else nsteps_np // 10),
        }
        results[name] = res

    print(f"\n{'kernel':<16} {'numba':>12} {'numpy':>12} {'speedup':>9}")
    labels = {"gs_sweep": f"gs sweep {n_smooth}^3 (s)",
              "mg_solve": "mg solve 3x3 lattice (s)",
              "traj_analytic": "traj step, analytic (s)",
              "traj_bspline": "traj step, bspline (s)"}
    for key, label in labels.items():
        a, b = results["numba"][key], results["numpy"][key]
        print(f"{label:<26} {a:>12.3e} {b:>12.3e} {b / a:>8.1f}x")


if __name__ == "__main__":
    main()
