"""Compiled versus pure-Python walk kernels.

Runs the same seeded walks on both backends, checks that the outputs agree
bit for bit, and prints the time per step and the speed-up.

    python3 benchmarks/bench_kernels.py [--steps 2000] [--repeat 3]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from nearconvex import kernel
from nearconvex import objectives as ob
from nearconvex.geometry import Ball, Box, Polytope
from nearconvex.hitrun import WalkParams, walk
from nearconvex.objectives import KernelTarget, ObjectiveOracle
from nearconvex.oned import SamplerParams


def cases(n: int):
    quad = ObjectiveOracle(ob.quadratic(n, np.full(n, 0.2)) + ob.sin_product(n, 0.01, 30.0), n)
    l1 = ObjectiveOracle(ob.l1(n, weight=5.0), n)
    A = np.vstack([np.eye(n), -np.eye(n), np.ones((1, n))])
    b = np.concatenate([np.ones(2 * n), [0.5 * n]])
    return [
        ("uniform/ball", Ball(np.zeros(n), 1.0), KernelTarget.uniform(n), 0.0),
        ("l1/box", Box.cube(n), l1.kernel_target(-1.0), 0.0),
        ("quad+sin/ball T=0.1", Ball(np.zeros(n), 1.0), quad.kernel_target(-10.0), 0.2),
        ("quad+sin/polytope", Polytope(A, b), quad.kernel_target(-1.0), 0.02),
    ]


def timed(fn, repeat: int):
    best, out = float("inf"), None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--dims", type=int, nargs="+", default=[2, 5, 10])
    args = ap.parse_args(argv)
    if not kernel.compiled_available():
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'case':<24}{'n':>4}{'python us/step':>16}{'compiled us/step':>18}{'speed-up':>10}  identical")
    for n in args.dims:
        for name, body, target, beta in cases(n):
            params = WalkParams(args.steps, None, SamplerParams(1e-4), beta, record_trace=True)

            def run(backend):
                return walk(target, body, body.interior_point, params, np.random.default_rng(1), backend=backend)

            tp, rp = timed(lambda: run("python"), args.repeat)
            tc, rc = timed(lambda: run("compiled"), args.repeat)
            same = (np.array_equal(rp.trace, rc.trace) and rp.oracle_queries == rc.oracle_queries
                    and rp.rejection_stats == rc.rejection_stats)
            print(f"{name:<24}{n:>4}{1e6 * tp / args.steps:>16.1f}{1e6 * tc / args.steps:>18.2f}"
                  f"{tp / tc:>10.1f}  {same}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
