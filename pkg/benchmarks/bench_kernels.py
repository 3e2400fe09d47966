"""Time the compiled kernels against the NumPy/SciPy fallback.

    python3 benchmarks/bench_kernels.py [--segments 2000] [--repeat 5]

Reports the best-of-N wall time per kernel and backend, the speed-up, and
the largest absolute difference between the two backends' outputs.
"""

import argparse
import time

import numpy as np

from ldivec import _kernels_py, kernels
from ldivec.synth import random_spd


def problem(rng, S, R, Nc, L):
    T = rng.normal(0, 1 / np.sqrt(R + 4), (Nc, R + 4, R))
    grams = np.einsum("idr,ids->irs", T, T)
    n = rng.uniform(0, 1000 / Nc, (S, Nc))
    a = rng.standard_normal((S, R)) * 30
    return n, a, grams, random_spd(rng, R), 3 * rng.standard_normal((L, R))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--segments", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)

    if "cython" not in kernels.available():
        print("compiled extension not built; only the fallback is available")
        return 1
    from ldivec import _kernels

    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<20}{'R':>4}{'Nc':>5}{'L':>4}{'python ms':>12}{'cython ms':>12}{'speed-up':>10}{'max diff':>11}")
    for R, Nc, L in [(2, 2, 3), (10, 32, 10), (50, 64, 20)]:
        args5 = problem(rng, args.segments, R, Nc, L)
        for name in ("posteriors", "ld_scores", "cpf_scores", "classical_ivectors"):
            call_args = args5[:3] if name == "classical_ivectors" else args5
            tp, op = best_of(lambda: getattr(_kernels_py, name)(*call_args), args.repeat)
            tc, oc = best_of(lambda: getattr(_kernels, name)(*call_args), args.repeat)
            op, oc = (op[1], oc[1]) if name == "posteriors" else (op, oc)
            diff = np.abs(np.asarray(op) - np.asarray(oc)).max()
            print(f"{name:<20}{R:>4}{Nc:>5}{L:>4}{tp * 1e3:>12.2f}{tc * 1e3:>12.2f}{tp / tc:>10.1f}{diff:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
