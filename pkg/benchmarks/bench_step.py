#!/usr/bin/env python3
"""Per-step timing of the compiled stencil backend vs the NumPy fallback.

Runs the full solver step (tendencies, ladder combination, FFT+tridiagonal
projection, blow-up scan) on a spun-up state at a few grid sizes and
reports per-step wall time for both backends plus the speedup.  The two
backends produce bitwise-identical states, so the comparison is purely
about speed.

Usage:
    python3 benchmarks/bench_step.py [--steps 200] [--sizes 96x32,192x64]
"""

import argparse
import time

import numpy as np

from rbcda import kernels
from rbcda.config import GridSpec, PhysicalParams, RunConfig, TimeSpec
from rbcda.solver import SolverWorkspace, init_random, simulate, step


def spun_up_state(nx, ny, backend):
    cfg = RunConfig(
        physical=PhysicalParams(rayleigh=1e5, prandtl=0.7),
        grid=GridSpec(nx=nx, ny=ny),
        time=TimeSpec(dt=1e-3, t_final=2.0, save_every=2000),
        seed=0,
    )
    traj = simulate(cfg, record=False, backend=backend)
    return cfg, traj.final_state


def time_steps(cfg, state, backend, n_steps):
    ws = SolverWorkspace(cfg, backend)
    s = state.copy()
    # warm up caches and the AB history before timing
    for _ in range(3):
        s = step(s, ws, cfg)
    t0 = time.perf_counter()
    for _ in range(n_steps):
        s = step(s, ws, cfg)
    dt = time.perf_counter() - t0
    return dt / n_steps, s


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200,
                        help="timed steps per backend (default 200)")
    parser.add_argument("--sizes", default="96x32,192x64,384x128",
                        help="comma-separated nx x ny grid sizes")
    args = parser.parse_args()

    sizes = []
    for token in args.sizes.split(","):
        nx, ny = token.lower().split("x")
        sizes.append((int(nx), int(ny)))

    backends = {"numpy": kernels.get_backend("numpy")}
    try:
        backends["compiled"] = kernels.get_backend("compiled")
    except Exception as exc:  # extension not built
        print(f"compiled backend unavailable ({exc}); timing numpy only")

    print(f"{args.steps} timed steps per backend, dt = 1e-3, Ra = 1e5\n")
    header = f"{'grid':>10} | " + " | ".join(
        f"{name + ' ms/step':>16}" for name in backends
    )
    if len(backends) == 2:
        header += " | speedup"
    print(header)
    print("-" * len(header))

    for nx, ny in sizes:
        per_step = {}
        final = {}
        for name, kb in backends.items():
            cfg, state = spun_up_state(nx, ny, kb)
            per_step[name], final[name] = time_steps(cfg, state, kb,
                                                     args.steps)
        row = f"{f'{nx}x{ny}':>10} | " + " | ".join(
            f"{1e3 * per_step[name]:16.3f}" for name in backends
        )
        if len(backends) == 2:
            row += f" | {per_step['numpy'] / per_step['compiled']:7.2f}x"
            same = all(
                np.array_equal(getattr(final["numpy"], f),
                               getattr(final["compiled"], f))
                for f in ("u", "v", "temperature", "pressure")
            )
            if not same:
                row += "  (WARNING: backends disagree)"
        print(row)


if __name__ == "__main__":
    main()
