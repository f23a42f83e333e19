"""Compare the compiled and numpy sweep backends.

Times the fused linear quadrature + exponential sweep on batches of lines and
a full solver run with each backend. Run from the repository root::

    python benchmarks/bench_sweep.py [--lines 160] [--cells 160 640 2560]
"""

import argparse
import math
import os
import subprocess
import sys
import timeit

import numpy as np

from kernel_hj import kernels
from kernel_hj.grid import make_uniform_grid
from kernel_hj.quadrature import LinePlan


def bench_kernels(lines, cells, repeat):
    found = kernels.backends()
    print(f"{'N':>6} {'lines':>6} " + " ".join(f"{name + ' [ms]':>14}" for name in found) + "   speedup")
    for n in cells:
        grid = make_uniform_grid(-1.0, 1.0, n)
        plan = LinePlan(grid, periodic=True)
        lw = plan.weights(40.0)
        v = np.ascontiguousarray(np.random.default_rng(0).standard_normal((lines, n + 1)))
        ref = None
        times = {}
        for name, (_, quad_sweep) in found.items():
            out = quad_sweep(v, plan.gather, lw.big, lw.decay)
            if ref is None:
                ref = out
            elif not np.allclose(out, ref, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"backend {name} disagrees with the reference")
            t = min(timeit.repeat(lambda: quad_sweep(v, plan.gather, lw.big, lw.decay), number=5, repeat=repeat)) / 5
            times[name] = t
        speed = times.get("python", math.nan) / times.get("cython", math.nan)
        print(f"{n:>6} {lines:>6} " + " ".join(f"{1e3 * t:>14.3f}" for t in times.values()) + f"   {speed:7.1f}x")


_SOLVE = (
    "import time, kernel_hj as k;"
    "p = k.builtin_problem('burgers_2d');"
    "g = k.make_uniform_grid(-2, 2, {n});"
    "s = time.perf_counter();"
    "k.run_solver(p, k.Grid2D(g, g), k.SchemeConfig(k=3, dim=2));"
    "print(k.BACKEND, time.perf_counter() - s)"
)


def bench_solver(n):
    # the backend is fixed at import, so each run gets its own interpreter
    print(f"\n2D Burgers {n}x{n}, k=3, to T = 0.5/pi^2")
    for forced in ("", "python"):
        env = dict(os.environ, KERNEL_HJ_BACKEND=forced)
        out = subprocess.run([sys.executable, "-c", _SOLVE.format(n=n)], env=env, capture_output=True, text=True)
        if out.returncode:
            raise SystemExit(out.stderr)
        name, secs = out.stdout.split()
        print(f"  {name:>7}: {float(secs):.2f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lines", type=int, default=160)
    ap.add_argument("--cells", type=int, nargs="+", default=[160, 640, 2560])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--solver-n", type=int, default=80)
    args = ap.parse_args()
    print(f"active backend: {kernels.BACKEND}\n")
    bench_kernels(args.lines, args.cells, args.repeat)
    bench_solver(args.solver_n)


if __name__ == "__main__":
    main()
