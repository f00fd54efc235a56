import os
import subprocess
import sys

import numpy as np
import pytest

from metastable import _kernels
from metastable._kernels import fallback

compiled = _kernels.compiled
needs_ext = pytest.mark.skipif(compiled is None, reason="compiled extension not built")


def _orbit_args(pl_map, x0, n, record=True, bins=257):
    lo, _, ylo, slope = (np.ascontiguousarray(a) for a in pl_map.kernel_arrays())
    hist = np.zeros(bins, dtype=np.int64)
    runs = np.empty(n, dtype=np.int64)
    d0, d1 = pl_map.domain
    return [lo, ylo, slope, d0, d1, x0, n, record, hist, d0, bins / (d1 - d0), 0.0, runs, -1, 0]


def test_backend_name():
    assert _kernels.BACKEND == ("cython" if compiled is not None else "python")


@needs_ext
class TestBitIdentity:
    @pytest.mark.parametrize("x0", [0.123456789, -0.7, 0.999, -1.0])
    def test_orbit_chunk(self, example_system, x0):
        a = _orbit_args(example_system.perturbed, x0, 50_000)
        b = _orbit_args(example_system.perturbed, x0, 50_000)
        ra = compiled.orbit_chunk(*a)
        rb = fallback.orbit_chunk(*b)
        assert ra == rb
        np.testing.assert_array_equal(a[8], b[8])
        np.testing.assert_array_equal(a[12][:ra[1]], b[12][:rb[1]])

    def test_burn_in_mode(self, example_system):
        a = _orbit_args(example_system.perturbed, 0.3, 10_000, record=False)
        b = _orbit_args(example_system.perturbed, 0.3, 10_000, record=False)
        assert compiled.orbit_chunk(*a) == fallback.orbit_chunk(*b)
        assert a[8].sum() == 0 == b[8].sum()

    @pytest.mark.parametrize("n", [1, 10, 333, 2000])
    def test_ulam_entries(self, example_system, n):
        te = example_system.perturbed
        lo, hi, ylo, slope = (np.ascontiguousarray(a) for a in te.kernel_arrays())
        ca = compiled.ulam_entries(lo, hi, ylo, slope, -1.0, 1.0, n)
        fa = fallback.ulam_entries(lo, hi, ylo, slope, -1.0, 1.0, n)
        for x, y in zip(ca, fa):
            np.testing.assert_array_equal(x, y)


def test_orbit_chunk_counts(example_system):
    args = _orbit_args(example_system.perturbed, 0.3, 5000)
    x, n_runs, side, run_len, clamps, n_a = _kernels.orbit_chunk(*args)
    assert args[8].sum() == 5000
    assert args[12][:n_runs].sum() + run_len == 5000
    assert clamps == 0 and 0 <= n_a <= 5000 and side in (0, 1)


def test_pure_python_switch(tmp_path):
    env = dict(os.environ, METASTABLE_PURE_PYTHON="1")
    code = ("import metastable, sys; from metastable import *; "
            "print(metastable.BACKEND); f = MapFamily(); "
            "e, s = simulate_orbit(f.system(0.02, 0.02).perturbed, OrbitConfig(seed=3, steps=20000)); "
            "print(repr(s.frac_A), s.transitions, float(e.density.heights.sum()))")
    pure = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    env["METASTABLE_PURE_PYTHON"] = "0"
    default = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert pure.returncode == 0, pure.stderr
    assert pure.stdout.splitlines()[0] == "python"
    assert pure.stdout.splitlines()[1:] == default.stdout.splitlines()[1:]


@needs_ext
def test_benchmark_runs(capsys):
    import importlib.util
    from pathlib import Path
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"
    loader_spec = importlib.util.spec_from_file_location("bench_kernels", path)
    bench = importlib.util.module_from_spec(loader_spec)
    loader_spec.loader.exec_module(bench)
    bench.main(["--steps", "5000", "--bins", "200", "--repeat", "1"])
    out = capsys.readouterr().out
    assert out.count("bit-identical") == 2
