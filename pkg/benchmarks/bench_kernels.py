"""Compiled vs pure-Python kernels: integration and dense-output evaluation.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from nlgreen import _backend
from nlgreen.analysis import periodic_family, scan_column
from nlgreen.ode_core import LinearODEProblem, integrate_fundamental_system

PROBLEMS = {
    "periodic n=1": LinearODEProblem(1, (0, 1), ("0",), 1.0),
    "variable n=3": LinearODEProblem(3, (0, 2), ("t", "sin(t)^2", "exp(-t)*cos(3*t)"), 0.7),
}


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases():
    for name, prob in PROBLEMS.items():
        for tol in (1e-8, 1e-10, 1e-12):
            yield f"integrate {name} tol={tol:g}", lambda p=prob, t=tol: integrate_fundamental_system(p, t)
    fs = integrate_fundamental_system(PROBLEMS["variable n=3"], 1e-10)
    pts = np.random.default_rng(0).uniform(0, 2, 200_000)
    yield "dense_eval 2e5 points", lambda: fs.matrix(pts)
    # fresh family each call so the per-M build is included
    yield "scan column M=1 (81 cells)", lambda: scan_column(periodic_family(), 1.0,
                                                            np.linspace(-4, 4, 81))


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    backends = _backend.available()
    print(f"{'case':<40}" + "".join(f"{b:>12}" for b in backends) + "     speedup")
    for label, fn in cases():
        row = {}
        for b in backends:
            prev = _backend.use(b)
            try:
                row[b] = best_of(fn, args.repeat)
            finally:
                _backend.use(prev)
        speed = f"{row['python'] / row['compiled']:10.1f}x" if "compiled" in row else "         -"
        print(f"{label:<40}" + "".join(f"{row[b] * 1e3:10.2f}ms" for b in backends) + speed)


if __name__ == "__main__":
    main()
