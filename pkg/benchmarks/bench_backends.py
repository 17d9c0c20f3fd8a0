"""Time the numba and pure-numpy kernels against each other.

    python benchmarks/bench_backends.py [--repeat 3]

Each kernel is warmed up once per backend (so JIT compilation is excluded)
and the best of ``--repeat`` runs is reported, along with a check that both
backends produce the same numbers.
"""
import argparse
import math
import time

import numpy as np

from qdisc import DiscriminationProblem, SchemeKind, SchemeSpec, build_table
from qdisc._accel import HAVE_NUMBA
from qdisc.evaluator import collective_operator, symmetric_eigenvalues
from qdisc.simulator import simulate_trials, trial_draws


def best_time(fn, repeat):
    fn()  # warm-up / JIT compile
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    if not HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")

    prob = DiscriminationProblem(math.radians(15.0), 0.5, 0.1)
    operator = collective_operator(prob, 6)
    table = build_table(prob, 10, 2501)
    spec = SchemeSpec.globally_optimal(table)
    draws = trial_draws(1, 0, 100_000, 10)

    cases = [
        ("build_table N=10 G=2501", lambda b: build_table(prob, 10, 2501, backend=b).values,
         lambda x, y: float(np.max(np.abs(x - y)))),
        ("Jacobi eigenvalues 64x64", lambda b: symmetric_eigenvalues(operator, backend=b),
         lambda x, y: float(np.max(np.abs(x - y)))),
        ("Monte Carlo 1e5 trials N=10", lambda b: simulate_trials(prob, spec, draws, backend=b),
         lambda x, y: float(np.count_nonzero(x[3] != y[3]))),
    ]
    print(f"{'kernel':<30}{'numba [s]':>12}{'numpy [s]':>12}{'speed-up':>10}  agreement")
    for name, run, compare in cases:
        t_nb, out_nb = best_time(lambda: run("numba"), args.repeat)
        t_np, out_np = best_time(lambda: run("numpy"), args.repeat)
        print(f"{name:<30}{t_nb:>12.4f}{t_np:>12.4f}{t_np / t_nb:>9.1f}x  {compare(out_nb, out_np):.1e}")


if __name__ == "__main__":
    main()
