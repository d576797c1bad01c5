"""Compare the compiled and numpy stencil backends.

Times the seven hot kernels on production-sized arrays and a short
closed-loop march end to end, printing per-call times and the speedup of the
compiled extension.  Run as

    python3 benchmarks/bench_kernels.py [--mesh 160] [--repeats 200]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from convcool.kernels import available_backends, get_backend


def _operands(n, rng):
    f = rng.standard_normal((n, n))
    q = rng.standard_normal((n, n))
    u = rng.standard_normal((n + 1, n))
    w = rng.standard_normal((n, n + 1))
    u[0, :] = u[-1, :] = 0.0
    w[:, 0] = w[:, -1] = 0.0
    h = 1.0 / n
    return {
        "lap_neumann": (f, h, h),
        "divergence": (u, w, h, h),
        "advect": (u, w, f, h, h),
        "face_force": (q, f, h, h),
        "grad_to_faces": (f, h, h),
        "lap_u": (u, h, h),
        "lap_w": (w, h, h),
    }


def bench_kernels(mesh, repeats):
    rng = np.random.default_rng(0)
    ops = _operands(mesh, rng)
    backends = available_backends()
    timings = {name: {} for name in ops}
    for backend in backends:
        impl = get_backend(backend)
        for name, args in ops.items():
            fn = getattr(impl, name)
            fn(*args)  # warm up
            t = timeit.timeit(lambda: fn(*args), number=repeats) / repeats
            timings[name][backend] = t
    width = max(len(n) for n in timings)
    header = f"{'kernel'.ljust(width)}  " + "".join(f"{b:>12}" for b in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(f"\nper-call kernel time, {mesh}x{mesh} mesh "
          f"(mean of {repeats} calls)")
    print(header)
    for name, by_backend in timings.items():
        row = name.ljust(width) + "  "
        row += "".join(f"{by_backend[b] * 1e6:>10.1f}us" for b in backends)
        if len(backends) > 1:
            row += f"{by_backend['numpy'] / by_backend['cython']:>9.1f}x"
        print(row)


_MARCH = """
import time
from convcool import FeedbackConfig, GridSpec, TimeGrid, simulate_closed_loop
from convcool.app import InitialConditionSpec, build_initial_condition
from convcool.kernels import BACKEND

mesh, steps = {mesh}, {steps}
grid = GridSpec(mesh, mesh)
tg = TimeGrid(float(steps) / mesh, steps)  # dt = h keeps the march stable
T0 = build_initial_condition(InitialConditionSpec("example1"), grid)
cfg = FeedbackConfig(0.75, 0.025, 0.05, tg, grid)
simulate_closed_loop(cfg, T0)  # warm up
start = time.perf_counter()
simulate_closed_loop(cfg, T0)
print(f"{{BACKEND}} {{time.perf_counter() - start:.3f}}")
"""


def bench_closed_loop(mesh, steps):
    """Time a feedback march in a fresh process per backend, selecting the
    kernels with the documented CONVCOOL_KERNELS environment variable."""
    print(f"\nclosed-loop march, {mesh}x{mesh} mesh, {steps} steps")
    results = {}
    for backend in available_backends():
        env = dict(os.environ, CONVCOOL_KERNELS=backend)
        proc = subprocess.run(
            [sys.executable, "-c", _MARCH.format(mesh=mesh, steps=steps)],
            env=env, capture_output=True, text=True, check=True)
        name, seconds = proc.stdout.split()
        assert name == backend, f"child selected {name}, wanted {backend}"
        results[backend] = float(seconds)
        print(f"{backend:>8}: {results[backend]:.2f}s")
    if len(results) > 1:
        print(f"{'speedup':>8}: {results['numpy'] / results['cython']:.1f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--mesh", type=int, default=160)
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--steps", type=int, default=40,
                        help="time steps for the end-to-end march")
    args = parser.parse_args()
    print(f"available backends: {', '.join(available_backends())}")
    bench_kernels(args.mesh, args.repeats)
    bench_closed_loop(args.mesh, args.steps)


if __name__ == "__main__":
    main()
