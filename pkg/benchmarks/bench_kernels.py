"""Compare the compiled and pure-Python kernels on the worked-example gated map.

Usage::

    python3 benchmarks/bench_kernels.py --steps 200000 --bins 2000 --repeat 3

Both backends run the same inputs; the script checks that their outputs are
bit-identical and reports the best wall time of each.
"""

import argparse
import time

import numpy as np

from metastable import _kernels
from metastable.experiments import MapFamily


def best_time(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def orbit_job(backend, te, steps, bins):
    lo, _, ylo, slope = (np.ascontiguousarray(a) for a in te.kernel_arrays())

    def run():
        hist = np.zeros(bins, dtype=np.int64)
        runs = np.empty(steps, dtype=np.int64)
        res = backend.orbit_chunk(lo, ylo, slope, -1.0, 1.0, 0.123456789, steps, True,
                                  hist, -1.0, bins / 2.0, 0.0, runs, -1, 0)
        return res, hist

    return run


def ulam_job(backend, te, bins):
    arrays = [np.ascontiguousarray(a) for a in te.kernel_arrays()]
    return lambda: backend.ulam_entries(*arrays, -1.0, 1.0, bins)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--steps", type=int, default=200_000, help="orbit steps per run")
    parser.add_argument("--bins", type=int, default=2000, help="histogram and Ulam bins")
    parser.add_argument("--eps", type=float, default=0.02, help="symmetric gate width")
    parser.add_argument("--repeat", type=int, default=3, help="runs per measurement (best kept)")
    args = parser.parse_args(argv)

    if _kernels.compiled is None:
        parser.exit(1, "compiled extension not built; run `pip install -e .` first\n")
    te = MapFamily().system(args.eps, args.eps).perturbed
    backends = {"cython": _kernels.compiled, "python": _kernels.fallback}

    print(f"map: {len(te)} branches; orbit {args.steps} steps; Ulam {args.bins} bins")
    print(f"{'kernel':<14}{'backend':<10}{'best [s]':>12}{'rate':>20}")
    for name, make, unit, count in (
            ("orbit_chunk", lambda b: orbit_job(b, te, args.steps, args.bins), "steps/s", args.steps),
            ("ulam_entries", lambda b: ulam_job(b, te, args.bins), "rows/s", args.bins)):
        outs, times = {}, {}
        for bname, backend in backends.items():
            times[bname], outs[bname] = best_time(make(backend), args.repeat)
            print(f"{name:<14}{bname:<10}{times[bname]:>12.4f}{count / times[bname]:>14.3g} {unit}")
        same = _identical(outs["cython"], outs["python"])
        print(f"{'':<14}speedup {times['python'] / times['cython']:.1f}x, "
              f"outputs {'bit-identical' if same else 'DIFFER'}")


def _identical(a, b):
    if isinstance(a, np.ndarray):
        return np.array_equal(a, b)
    if isinstance(a, tuple):
        return len(a) == len(b) and all(_identical(x, y) for x, y in zip(a, b))
    return a == b


if __name__ == "__main__":
    main()
