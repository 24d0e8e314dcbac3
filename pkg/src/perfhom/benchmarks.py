"""Timing comparison of the compiled sweep kernel and the numpy fallback.

Run as `python -m perfhom.benchmarks [--n N] [--sweeps K]`.  Both backends
run the same red-black passes on the same Poisson problem; the report
prints per-sweep times, the speedup, and the max deviation between the two
solutions (which must be at machine precision).
"""

from __future__ import annotations

import argparse
import os
import time

import numpy as np

from . import fields, grids, relax, stencil
from .kernels import compiled_available


def _problem(N):
    grid = grids.BoxGrid(3, N)
    opr = stencil.assemble(fields.ConstantField(np.eye(3)), grid)
    X, Y, Z = np.meshgrid(*grid.axes, indexing="ij")
    f = np.sin(np.pi * X) * np.sin(np.pi * Y) * np.sin(np.pi * Z)
    return grid, opr, f


def _run(opr, grid, f, sweeps):
    prob = relax.RelaxProblem.from_operator(opr, ~grid.boundary_mask())
    u = np.zeros(grid.shape)
    rhs = relax._full(-f, grid.shape)
    omega = relax.tuned_omega(grid.shape)
    t0 = time.perf_counter()
    for _ in range(sweeps):
        prob._sweep(u, rhs, omega, None)
    dt = (time.perf_counter() - t0) / sweeps
    return u, dt, prob.backend


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=96,
                        help="grid intervals per axis")
    parser.add_argument("--sweeps", type=int, default=20)
    args = parser.parse_args(argv)
    grid, opr, f = _problem(args.n)

    if not compiled_available():
        print("compiled kernel not available; benchmarking fallback only")
        _, dt, _ = _run(opr, grid, f, args.sweeps)
        print(f"fallback: {dt * 1e3:8.2f} ms/sweep")
        return

    u_c, dt_c, name_c = _run(opr, grid, f, args.sweeps)
    os.environ["PERFHOM_FORCE_FALLBACK"] = "1"
    try:
        u_f, dt_f, name_f = _run(opr, grid, f, args.sweeps)
    finally:
        del os.environ["PERFHOM_FORCE_FALLBACK"]
    dev = float(np.abs(u_c - u_f).max())
    nodes = u_c.size
    print(f"grid {args.n}^3 ({nodes} nodes), {args.sweeps} sweeps each")
    print(f"{name_c:>9}: {dt_c * 1e3:8.2f} ms/sweep "
          f"({nodes / dt_c / 1e6:.1f} Mnode/s)")
    print(f"{name_f:>9}: {dt_f * 1e3:8.2f} ms/sweep "
          f"({nodes / dt_f / 1e6:.1f} Mnode/s)")
    print(f"speedup: {dt_f / dt_c:.2f}x, max deviation {dev:.3e}")


if __name__ == "__main__":
    main()
